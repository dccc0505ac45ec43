#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace i2l {

enum class SplitTag : std::uint8_t { None, Train, Val, Test };

std::string to_string(SplitTag tag);
SplitTag split_tag_from_string(const std::string& s);

// Row-major feature matrix with action labels and per-row provenance.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<std::string> feature_names) : names_(std::move(feature_names)) {}

  std::size_t rows() const { return labels_.size(); }
  std::size_t cols() const { return names_.size(); }
  bool empty() const { return labels_.empty(); }

  const std::vector<std::string>& feature_names() const { return names_; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols(), cols()}; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  int label(std::size_t r) const { return labels_[r]; }
  SplitTag tag(std::size_t r) const { return tags_[r]; }
  int episode(std::size_t r) const { return episodes_[r]; }
  int topology_index(std::size_t r) const { return topologies_[r]; }

  const std::vector<int>& labels() const { return labels_; }
  const std::vector<SplitTag>& tags() const { return tags_; }
  const std::vector<int>& episodes() const { return episodes_; }
  const std::vector<int>& topology_indices() const { return topologies_; }

  // Names of the topologies referenced by topology_index.
  std::vector<std::string>& topology_names() { return topology_names_; }
  const std::vector<std::string>& topology_names() const { return topology_names_; }

  void reserve(std::size_t n);
  void append(std::span<const double> values, int label, int episode = 0, int topology = 0,
              SplitTag tag = SplitTag::None);
  void set_tag(std::size_t r, SplitTag tag) { tags_.at(r) = tag; }
  void set_episode(std::size_t r, int episode) { episodes_.at(r) = episode; }
  void set_topology_index(std::size_t r, int topology) { topologies_.at(r) = topology; }

  // Rows in the given order, with provenance and tags.
  Dataset select(std::span<const std::size_t> rows) const;
  std::vector<std::size_t> rows_with(SplitTag tag) const;
  // Appends all rows of `other`, which must have identical columns.
  void concat(const Dataset& other);

  // Throws InputError if labels leave 0..n_classes-1 or the matrix is not rectangular.
  void validate(int n_classes = 5) const;

 private:
  std::vector<std::string> names_;
  std::vector<double> values_;
  std::vector<int> labels_;
  std::vector<SplitTag> tags_;
  std::vector<int> episodes_;
  std::vector<int> topologies_;
  std::vector<std::string> topology_names_;
};

// CSV with header = feature names followed by `action`. Values are written
// with round-trip precision.
void write_dataset_csv(const Dataset& data, std::ostream& out);
// Sidecar CSV: episode,topology,split per row.
void write_dataset_meta_csv(const Dataset& data, std::ostream& out);
Dataset read_dataset_csv(std::istream& data_in, std::istream* meta_in = nullptr);

}  // namespace i2l
