#include "pipeline.hpp"

#include <openssl/evp.h>

#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "i2l/error.hpp"

namespace i2l::cli {

namespace fs = std::filesystem;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

std::string canonical_config(const ExperimentConfig& config) { return config_to_json(config).dump(2) + "\n"; }

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

}  // namespace

Manifest::Manifest(fs::path out, const ExperimentConfig& config) : out_(std::move(out)) {
  hash_ = sha256_hex(canonical_config(config));
  const fs::path path = out_ / "manifest.json";
  if (fs::exists(path)) {
    doc_ = read_json(path);
    if (doc_.value("config_sha256", std::string()) != hash_) doc_ = nlohmann::json::object();
  }
  doc_["tool_version"] = kToolVersion;
  doc_["config_sha256"] = hash_;
  doc_["config"] = "config.json";
  doc_["seed"] = config.seed;
  if (!doc_.contains("stages")) doc_["stages"] = nlohmann::json::object();
  write_file(out_ / "config.json", canonical_config(config));
}

bool Manifest::has_stage(const std::string& stage) const {
  if (!doc_["stages"].contains(stage)) return false;
  for (const auto& p : doc_["stages"][stage]["outputs"])
    if (!fs::exists(out_ / p.get<std::string>())) return false;
  return true;
}

void Manifest::record(const std::string& stage, const std::vector<std::string>& outputs, const std::string& started,
                      nlohmann::json extra) {
  nlohmann::json entry = {{"outputs", outputs}, {"started", started}, {"finished", utc_timestamp()}};
  if (extra.is_object())
    for (auto& [k, v] : extra.items()) entry[k] = v;
  doc_["stages"][stage] = entry;
}

void Manifest::write() const {
  if (sha256_hex(read_file(out_ / doc_["config"].get<std::string>())) != hash_)
    throw std::runtime_error("stored config does not match the manifest hash");
  for (const auto& [stage, entry] : doc_["stages"].items())
    for (const auto& p : entry["outputs"])
      if (!fs::exists(out_ / p.get<std::string>()))
        throw std::runtime_error("manifest output '" + p.get<std::string>() + "' of stage " + stage + " is missing");
  write_file(out_ / "manifest.json", doc_.dump(2) + "\n");
}

namespace {

const char* kEpisodeIndex = "episodes/index.json";
const char* kDatasetCsv = "dataset.csv";
const char* kDatasetMeta = "dataset_meta.csv";
const char* kFeaturesJson = "features.json";
const char* kSequenceJson = "trees/sequence.json";
const char* kCurveCsv = "curve.csv";
const char* kReportJson = "report.json";
const char* kReportCsv = "report.csv";

std::string episode_file(const std::string& topology, int index) {
  std::ostringstream s;
  s << "episodes/" << topology << '_' << std::setw(4) << std::setfill('0') << index << ".jsonl";
  return s.str();
}

Collection simulate(const Context& ctx, Manifest& manifest) {
  const std::string started = utc_timestamp();
  Collection c = simulate_collection(ctx.config);
  std::vector<std::string> outputs{kEpisodeIndex};
  nlohmann::json index = nlohmann::json::array();
  std::vector<int> per_topology(c.topologies.size(), 0);
  for (const EpisodeRecord& rec : c.episodes) {
    const std::string& name = c.topologies[rec.topology].name();
    const std::string file = episode_file(name, per_topology[rec.topology]++);
    auto out = open_out(ctx.out / file);
    write_episode_log(rec.history, name, out);
    index.push_back({{"id", rec.id}, {"topology", name}, {"test_only", rec.test_only}, {"file", file}});
    outputs.push_back(file);
  }
  write_file(ctx.out / kEpisodeIndex, index.dump(2) + "\n");
  manifest.record("simulate", outputs, started, {{"episodes", c.episodes.size()}});
  return c;
}

Collection load_or_simulate(const Context& ctx, Manifest& manifest) {
  if (!manifest.has_stage("simulate")) return simulate(ctx, manifest);
  // topologies in the same order simulate_collection resolves them
  Collection c = collection_topologies(ctx.config);
  for (const auto& e : read_json(ctx.out / kEpisodeIndex)) {
    EpisodeRecord rec;
    rec.id = e.at("id").get<int>();
    rec.test_only = e.at("test_only").get<bool>();
    const auto name = e.at("topology").get<std::string>();
    rec.topology = -1;
    for (std::size_t t = 0; t < c.topologies.size(); ++t)
      if (c.topologies[t].name() == name) rec.topology = static_cast<int>(t);
    if (rec.topology < 0) throw ConfigError("episode log names unknown topology '" + name + "'");
    std::ifstream in(ctx.out / e.at("file").get<std::string>(), std::ios::binary);
    if (!in) throw ConfigError("cannot open episode log '" + e.at("file").get<std::string>() + "'");
    rec.history = read_episode_log(in);
    c.episodes.push_back(std::move(rec));
  }
  return c;
}

Dataset features(const Context& ctx, Manifest& manifest) {
  const Collection c = load_or_simulate(ctx, manifest);
  const std::string started = utc_timestamp();
  const Representation rep(ctx.config.representation);
  Dataset data = assemble_dataset(ctx.config, c, rep);
  {
    auto out = open_out(ctx.out / kDatasetCsv);
    write_dataset_csv(data, out);
    auto meta = open_out(ctx.out / kDatasetMeta);
    write_dataset_meta_csv(data, meta);
  }
  nlohmann::json names = nlohmann::json::array();
  for (const auto& n : rep.names()) names.push_back(n);
  write_file(ctx.out / kFeaturesJson, names.dump(2) + "\n");
  manifest.record("features", {kDatasetCsv, kDatasetMeta, kFeaturesJson}, started,
                  {{"representation", ctx.config.representation.label()},
                   {"feature_count", rep.size()},
                   {"rows", data.rows()}});
  return data;
}

Dataset load_or_features(const Context& ctx, Manifest& manifest) {
  if (!manifest.has_stage("features")) return features(ctx, manifest);
  std::ifstream in(ctx.out / kDatasetCsv, std::ios::binary);
  std::ifstream meta(ctx.out / kDatasetMeta, std::ios::binary);
  if (!in || !meta) throw ConfigError("cannot open the dataset in '" + ctx.out.string() + "'");
  return read_dataset_csv(in, &meta);
}

std::string level_name(int level) { return level == 0 ? "T0" : "prune_" + std::to_string(level); }

TrainResult train(const Context& ctx, Manifest& manifest) {
  const Dataset data = load_or_features(ctx, manifest);
  const std::string started = utc_timestamp();
  TrainResult r = train_trees(data, make_loss(ctx.config.loss));
  std::vector<std::string> outputs{kSequenceJson, kCurveCsv};
  write_file(ctx.out / kSequenceJson, train_result_to_json(r).dump() + "\n");
  {
    auto out = open_out(ctx.out / kCurveCsv);
    write_curve_csv(r.curve, out);
  }
  auto write_tree = [&](const std::string& name, const DecisionTree& tree) {
    const std::string json = "trees/" + name + ".json", dot = "trees/" + name + ".dot";
    write_file(ctx.out / json, tree_to_json(tree).dump(2) + "\n");
    write_file(ctx.out / dot, tree_to_dot(tree));
    outputs.push_back(json);
    outputs.push_back(dot);
  };
  for (int level : selected_levels(ctx.config, r))
    write_tree(level_name(level), level == 0 ? r.t0 : r.sequence.tree(level));
  write_tree("best_val", r.best_val_index == 0 ? r.t0 : r.sequence.tree(r.best_val_index));
  manifest.record("train", outputs, started,
                  {{"sequence_length", r.sequence.size()},
                   {"t0_leaves", r.t0.leaf_count()},
                   {"best_val_index", r.best_val_index}});
  return r;
}

}  // namespace

void cmd_simulate(const Context& ctx) {
  Manifest m(ctx.out, ctx.config);
  simulate(ctx, m);
  m.write();
}

void cmd_features(const Context& ctx) {
  Manifest m(ctx.out, ctx.config);
  features(ctx, m);
  m.write();
}

void cmd_train(const Context& ctx) {
  Manifest m(ctx.out, ctx.config);
  train(ctx, m);
  m.write();
}

void cmd_evaluate(const Context& ctx) {
  Manifest m(ctx.out, ctx.config);
  const Dataset data = load_or_features(ctx, m);
  TrainResult trained;
  if (m.has_stage("train"))
    trained = train_result_from_json(read_json(ctx.out / kSequenceJson));
  else
    trained = train(ctx, m);
  const std::string started = utc_timestamp();
  std::vector<Topology> tests;
  for (const auto& ref : ctx.config.test_topologies) tests.push_back(resolve_topology(ref, ctx.config.base_dir));
  const MetricsReport report = evaluate_trees(ctx.config, data, trained, tests);
  write_file(ctx.out / kReportJson, report_to_json(report).dump(2) + "\n");
  {
    auto out = open_out(ctx.out / kReportCsv);
    write_report_csv(report, out);
  }
  m.record("evaluate", {kReportJson, kReportCsv}, started, {{"rows", report.rows.size()}});
  m.write();
}

void cmd_report(const Context& ctx, std::ostream& out) {
  Manifest m(ctx.out, ctx.config);
  if (!m.has_stage("evaluate"))
    throw ConfigError("no evaluation for this config in '" + ctx.out.string() + "'; run evaluate first");
  const std::string started = utc_timestamp();
  const MetricsReport r = report_from_json(read_json(ctx.out / kReportJson));
  std::ostringstream s;
  s << "# " << r.target << " imitated with " << r.representation << "\n\n";
  s << "features: " << r.feature_count << ", rows: train " << r.train_rows << ", val " << r.val_rows << ", test "
    << r.test_rows << "\n\n";
  s << "| tree | leaves | features | topology | accuracy | MTBF | collisions | stalls |\n";
  s << "|---|---|---|---|---|---|---|---|\n";
  s << std::fixed;
  for (const ReportRow& row : r.rows)
    s << "| " << row.tree << " | " << row.leaves << " | " << row.used_features << " | " << row.topology << " | "
      << std::setprecision(4) << row.accuracy << " | " << std::setprecision(1) << row.deployment.mtbf << " | "
      << row.deployment.collisions << " | " << row.deployment.stalls << " |\n";
  if (!r.references.empty()) {
    s << "\n| policy | topology | MTBF | collisions | stalls |\n|---|---|---|---|---|\n";
    for (const ReferenceRow& ref : r.references)
      s << "| " << ref.policy << " | " << ref.topology << " | " << std::setprecision(1) << ref.deployment.mtbf
        << " | " << ref.deployment.collisions << " | " << ref.deployment.stalls << " |\n";
  }
  write_file(ctx.out / "summary.md", s.str());
  out << s.str();
  m.record("report", {"summary.md"}, started);
  m.write();
}

}  // namespace i2l::cli
