#include "i2l/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>

#include "i2l/error.hpp"

namespace i2l {

std::string to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::None: return "none";
    case SplitTag::Train: return "train";
    case SplitTag::Val: return "val";
    case SplitTag::Test: return "test";
  }
  return "none";
}

SplitTag split_tag_from_string(const std::string& s) {
  if (s == "none") return SplitTag::None;
  if (s == "train") return SplitTag::Train;
  if (s == "val") return SplitTag::Val;
  if (s == "test") return SplitTag::Test;
  throw ConfigError("unknown split tag '" + s + "'");
}

void Dataset::reserve(std::size_t n) {
  values_.reserve(n * cols());
  labels_.reserve(n);
  tags_.reserve(n);
  episodes_.reserve(n);
  topologies_.reserve(n);
}

void Dataset::append(std::span<const double> values, int label, int episode, int topology, SplitTag tag) {
  if (values.size() != cols()) throw InputError("row width does not match the dataset columns");
  values_.insert(values_.end(), values.begin(), values.end());
  labels_.push_back(label);
  tags_.push_back(tag);
  episodes_.push_back(episode);
  topologies_.push_back(topology);
}

Dataset Dataset::select(std::span<const std::size_t> rows) const {
  Dataset out(names_);
  out.topology_names_ = topology_names_;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.append(row(r), labels_[r], episodes_[r], topologies_[r], tags_[r]);
  return out;
}

std::vector<std::size_t> Dataset::rows_with(SplitTag tag) const {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < rows(); ++r)
    if (tags_[r] == tag) out.push_back(r);
  return out;
}

void Dataset::concat(const Dataset& other) {
  if (other.names_ != names_) throw InputError("cannot concatenate datasets with different columns");
  // topology indices are remapped onto this dataset's name table
  std::vector<int> remap(other.topology_names_.size());
  for (std::size_t i = 0; i < other.topology_names_.size(); ++i) {
    auto it = std::find(topology_names_.begin(), topology_names_.end(), other.topology_names_[i]);
    if (it == topology_names_.end()) {
      topology_names_.push_back(other.topology_names_[i]);
      remap[i] = static_cast<int>(topology_names_.size()) - 1;
    } else {
      remap[i] = static_cast<int>(it - topology_names_.begin());
    }
  }
  reserve(rows() + other.rows());
  for (std::size_t r = 0; r < other.rows(); ++r) {
    const int t = other.topologies_[r];
    const int mapped = t >= 0 && t < static_cast<int>(remap.size()) ? remap[t] : t;
    append(other.row(r), other.labels_[r], other.episodes_[r], mapped, other.tags_[r]);
  }
}

void Dataset::validate(int n_classes) const {
  if (values_.size() != labels_.size() * cols()) throw InputError("feature matrix is not rectangular");
  for (int l : labels_)
    if (l < 0 || l >= n_classes) throw InputError("label " + std::to_string(l) + " outside the action range");
}

// ---------------------------------------------------------------------------
// CSV

namespace {

void write_field(std::ostream& out, const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) {
    out << s;
    return;
  }
  out << '"';
  for (char c : s) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

void write_double(std::ostream& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, res.ptr - buf);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError("bad number '" + s + "' in CSV");
  return v;
}

int parse_int(const std::string& s) {
  int v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError("bad integer '" + s + "' in CSV");
  return v;
}

}  // namespace

void write_dataset_csv(const Dataset& data, std::ostream& out) {
  for (const std::string& name : data.feature_names()) {
    write_field(out, name);
    out << ',';
  }
  out << "action\n";
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (double v : data.row(r)) {
      write_double(out, v);
      out << ',';
    }
    out << data.label(r) << '\n';
  }
}

void write_dataset_meta_csv(const Dataset& data, std::ostream& out) {
  out << "episode,topology,split\n";
  for (std::size_t r = 0; r < data.rows(); ++r) {
    const int t = data.topology_index(r);
    const auto& names = data.topology_names();
    out << data.episode(r) << ',';
    write_field(out, t >= 0 && t < static_cast<int>(names.size()) ? names[t] : std::to_string(t));
    out << ',' << to_string(data.tag(r)) << '\n';
  }
}

Dataset read_dataset_csv(std::istream& data_in, std::istream* meta_in) {
  std::string line;
  if (!std::getline(data_in, line)) throw ConfigError("dataset CSV is empty");
  auto header = split_csv(line);
  if (header.empty() || header.back() != "action") throw ConfigError("dataset CSV must end with an 'action' column");
  header.pop_back();
  Dataset data(header);
  std::vector<double> row(header.size());
  while (std::getline(data_in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != header.size() + 1) throw ConfigError("dataset CSV row has the wrong number of fields");
    for (std::size_t c = 0; c < header.size(); ++c) row[c] = parse_double(fields[c]);
    data.append(row, parse_int(fields.back()));
  }
  if (meta_in != nullptr) {
    if (!std::getline(*meta_in, line) || split_csv(line) != std::vector<std::string>{"episode", "topology", "split"})
      throw ConfigError("dataset meta CSV has an unexpected header");
    std::size_t r = 0;
    while (std::getline(*meta_in, line)) {
      if (line.empty()) continue;
      const auto f = split_csv(line);
      if (f.size() != 3 || r >= data.rows()) throw ConfigError("dataset meta CSV does not match the dataset");
      auto& names = data.topology_names();
      auto it = std::find(names.begin(), names.end(), f[1]);
      int t = static_cast<int>(it - names.begin());
      if (it == names.end()) names.push_back(f[1]);
      data.set_episode(r, parse_int(f[0]));
      data.set_topology_index(r, t);
      data.set_tag(r, split_tag_from_string(f[2]));
      ++r;
    }
    if (r != data.rows()) throw ConfigError("dataset meta CSV does not match the dataset");
  }
  data.validate();
  return data;
}

}  // namespace i2l
