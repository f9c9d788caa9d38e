#pragma once

// On-disk interchange for hidden-state matrices, question manifests and
// correctness labels.
//
// Representation file (.pkr), little-endian:
//   0   4  magic "PKR1"
//   4   2  u16 format version (1)
//   6   2  u16 reserved (0)
//   8   4  u32 layer_index
//   12  4  u32 dim
//   16  8  u64 rows
//   24  .. u16 length + UTF-8 model_id, u16 length + UTF-8 dataset_id
//   ..     rows * dim float32, row-major
//
// Manifest: JSON {dataset_id, qids, layers: [{model_id, layer_index, path}]}
// with optional "labels": [path] and "question_text": [string]. Relative
// paths resolve against the manifest's directory.
//
// Labels: JSON lines {qid, model, correct} with correct in {0, 1}.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace privgap {

inline constexpr std::uint16_t kRepFormatVersion = 1;

struct LayerMatrix {
  std::string model_id;
  std::string dataset_id;
  std::uint32_t layer_index = 0;
  std::uint64_t rows = 0;
  std::uint32_t dim = 0;
  std::vector<float> data;  // row-major, rows * dim

  std::span<const float> row(std::uint64_t i) const {
    return {data.data() + i * dim, dim};
  }

  /// Copy into a double-precision Eigen matrix for training.
  Eigen::MatrixXd to_eigen() const;

  /// Lossy cast of a double matrix; 64-bit extraction output ends up here.
  static LayerMatrix from_eigen(std::string model_id, std::string dataset_id,
                                std::uint32_t layer_index, const Eigen::MatrixXd& m);

  bool operator==(const LayerMatrix&) const = default;
};

struct QuestionManifest {
  std::string dataset_id;
  std::vector<std::string> qids;
  std::vector<std::string> question_text;  // empty or parallel to qids

  std::size_t size() const { return qids.size(); }
  bool operator==(const QuestionManifest&) const = default;
};

struct LabelVector {
  std::string dataset_id;
  std::string model_id;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t positives() const;
  bool operator==(const LabelVector&) const = default;
};

struct LabelRecord {
  std::string qid;
  std::string model;
  int correct = 0;

  bool operator==(const LabelRecord&) const = default;
};

struct LayerRef {
  std::string model_id;
  std::uint32_t layer_index = 0;
  std::filesystem::path path;
};

/// One dataset's questions, every (model, layer) matrix and the raw labels.
class RepresentationSet {
public:
  RepresentationSet() = default;
  explicit RepresentationSet(QuestionManifest manifest) : manifest_(std::move(manifest)) {}

  const QuestionManifest& manifest() const { return manifest_; }
  const std::string& dataset_id() const { return manifest_.dataset_id; }
  std::size_t size() const { return manifest_.size(); }

  /// Validates row count, dataset id and (model, layer) uniqueness.
  void add_layer(LayerMatrix matrix);
  void add_labels(std::span<const LabelRecord> records);

  bool has_layer(const std::string& model, std::uint32_t layer) const;
  const LayerMatrix& layer(const std::string& model, std::uint32_t layer) const;
  std::vector<std::uint32_t> layers_of(const std::string& model) const;
  std::vector<std::string> models() const;
  /// Models with at least one label record.
  std::vector<std::string> labelled_models() const;
  const std::vector<LabelRecord>& label_records() const { return labels_; }

  /// Shorthand for align_labels(manifest(), label_records(), model).
  LabelVector labels_for(const std::string& model) const;

  bool operator==(const RepresentationSet&) const = default;

private:
  QuestionManifest manifest_;
  std::map<std::pair<std::string, std::uint32_t>, LayerMatrix> layers_;
  std::vector<LabelRecord> labels_;
};

void write_rep_file(const LayerMatrix& matrix, const std::filesystem::path& path);
LayerMatrix read_rep_file(const std::filesystem::path& path);

/// Byte-level codec behind the file functions.
std::vector<std::uint8_t> encode_rep(const LayerMatrix& matrix);
LayerMatrix decode_rep(std::span<const std::uint8_t> bytes);

std::vector<LabelRecord> read_label_records(const std::filesystem::path& path);
void write_label_records(std::span<const LabelRecord> records,
                         const std::filesystem::path& path);
std::vector<LabelRecord> parse_label_records(const std::string& jsonl);

struct ManifestFile {
  QuestionManifest manifest;
  std::vector<LayerRef> layers;
  std::vector<std::filesystem::path> label_files;
};

/// Parses a manifest; relative paths are resolved against its directory.
ManifestFile read_manifest(const std::filesystem::path& path);
void write_manifest(const ManifestFile& manifest, const std::filesystem::path& path);

RepresentationSet load_bundle(const std::filesystem::path& manifest_path);

/// Writes every matrix as <dir>/<model>_L<layer>.pkr, the labels as
/// <dir>/labels.jsonl and the manifest as <dir>/manifest.json.
std::filesystem::path write_bundle(const RepresentationSet& reps,
                                   const std::filesystem::path& dir);

LabelVector align_labels(const QuestionManifest& manifest,
                         std::span<const LabelRecord> records,
                         const std::string& target_model);

}  // namespace privgap
