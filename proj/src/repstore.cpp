#include "privgap/repstore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "privgap/error.hpp"

namespace privgap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint8_t kMagic[4] = {'P', 'K', 'R', '1'};
constexpr std::size_t kFixedHeader = 24;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
  }
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
  }
  return static_cast<T>(v);
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  if (s.size() > UINT16_MAX) {
    throw Error(ErrorCode::InvalidArgument, "identifier longer than 65535 bytes");
  }
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

std::string get_string(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  if (offset + 2 > bytes.size()) {
    throw Error(ErrorCode::TruncatedPayload, "header ends inside a string length");
  }
  const auto len = get_le<std::uint16_t>(bytes, offset);
  offset += 2;
  if (offset + len > bytes.size()) {
    throw Error(ErrorCode::TruncatedPayload, "header ends inside a string");
  }
  std::string s(reinterpret_cast<const char*>(bytes.data() + offset), len);
  offset += len;
  return s;
}

void check_finite(const LayerMatrix& m) {
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    if (!std::isfinite(m.data[i])) {
      throw Error(ErrorCode::NonFinite,
                  "entry " + std::to_string(i) + " of " + m.model_id + " layer " +
                      std::to_string(m.layer_index) + " is not finite");
    }
  }
}

void check_shape(const LayerMatrix& m) {
  if (m.data.size() != m.rows * static_cast<std::uint64_t>(m.dim)) {
    throw Error(ErrorCode::InvalidArgument, "payload length does not match rows * dim");
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

// ---------------------------------------------------------------------------

Eigen::MatrixXd LayerMatrix::to_eigen() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (std::uint64_t i = 0; i < rows; ++i) {
    for (std::uint32_t j = 0; j < dim; ++j) {
      m(static_cast<Eigen::Index>(i), j) = data[i * dim + j];
    }
  }
  return m;
}

LayerMatrix LayerMatrix::from_eigen(std::string model_id, std::string dataset_id,
                                    std::uint32_t layer_index, const Eigen::MatrixXd& m) {
  LayerMatrix out;
  out.model_id = std::move(model_id);
  out.dataset_id = std::move(dataset_id);
  out.layer_index = layer_index;
  out.rows = static_cast<std::uint64_t>(m.rows());
  out.dim = static_cast<std::uint32_t>(m.cols());
  out.data.resize(out.rows * out.dim);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      out.data[static_cast<std::size_t>(i) * out.dim + j] = static_cast<float>(m(i, j));
    }
  }
  return out;
}

std::size_t LabelVector::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_rep(const LayerMatrix& m) {
  check_shape(m);
  check_finite(m);
  std::vector<std::uint8_t> out;
  out.reserve(kFixedHeader + 4 + m.model_id.size() + m.dataset_id.size() + m.data.size() * 4);
  for (auto b : kMagic) out.push_back(b);
  put_le<std::uint16_t>(out, kRepFormatVersion);
  put_le<std::uint16_t>(out, 0);
  put_le<std::uint32_t>(out, m.layer_index);
  put_le<std::uint32_t>(out, m.dim);
  put_le<std::uint64_t>(out, m.rows);
  put_string(out, m.model_id);
  put_string(out, m.dataset_id);
  for (float f : m.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

LayerMatrix decode_rep(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw Error(ErrorCode::BadMagic, "file does not start with PKR1");
  }
  if (bytes.size() < kFixedHeader) {
    throw Error(ErrorCode::TruncatedPayload, "header shorter than 24 bytes");
  }
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kRepFormatVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "format version " + std::to_string(version));
  }
  LayerMatrix m;
  m.layer_index = get_le<std::uint32_t>(bytes, 8);
  m.dim = get_le<std::uint32_t>(bytes, 12);
  m.rows = get_le<std::uint64_t>(bytes, 16);
  std::size_t offset = kFixedHeader;
  m.model_id = get_string(bytes, offset);
  m.dataset_id = get_string(bytes, offset);

  const std::size_t available = bytes.size() - offset;
  if (m.dim != 0 && m.rows > available / 4 / m.dim) {
    throw Error(ErrorCode::TruncatedPayload,
                "payload has " + std::to_string(available) + " bytes, need " +
                    std::to_string(m.rows) + "x" + std::to_string(m.dim) + "x4");
  }
  const std::size_t count = static_cast<std::size_t>(m.rows) * m.dim;
  if (available != count * 4) {
    throw Error(ErrorCode::TrailingData,
                std::to_string(available - count * 4) + " bytes after the payload");
  }
  m.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    m.data[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, offset + 4 * i));
  }
  check_finite(m);
  return m;
}

void write_rep_file(const LayerMatrix& matrix, const fs::path& path) {
  const auto bytes = encode_rep(matrix);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

LayerMatrix read_rep_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_rep(bytes);
}

// ---------------------------------------------------------------------------

std::vector<LabelRecord> parse_label_records(const std::string& jsonl) {
  std::vector<LabelRecord> out;
  std::istringstream in(jsonl);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, "label line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("qid") || !j.contains("model") || !j.contains("correct") ||
        !j["qid"].is_string() || !j["model"].is_string()) {
      throw Error(ErrorCode::ParseError,
                  "label line " + std::to_string(lineno) + " needs string qid, model and correct");
    }
    const auto& c = j["correct"];
    if (!c.is_number_integer() || (c.get<std::int64_t>() != 0 && c.get<std::int64_t>() != 1)) {
      throw Error(ErrorCode::NonBinaryLabel,
                  "label line " + std::to_string(lineno) + ": correct = " + c.dump());
    }
    out.push_back({j["qid"].get<std::string>(), j["model"].get<std::string>(),
                   static_cast<int>(c.get<std::int64_t>())});
  }
  return out;
}

std::vector<LabelRecord> read_label_records(const fs::path& path) {
  return parse_label_records(read_text(path));
}

void write_label_records(std::span<const LabelRecord> records, const fs::path& path) {
  std::string text;
  for (const auto& r : records) {
    json j = {{"qid", r.qid}, {"model", r.model}, {"correct", r.correct}};
    text += j.dump();
    text += '\n';
  }
  write_text(path, text);
}

LabelVector align_labels(const QuestionManifest& manifest, std::span<const LabelRecord> records,
                         const std::string& target_model) {
  std::unordered_map<std::string, int> by_qid;
  for (const auto& r : records) {
    if (r.model != target_model) continue;
    if (r.correct != 0 && r.correct != 1) {
      throw Error(ErrorCode::NonBinaryLabel, r.qid + " has label " + std::to_string(r.correct));
    }
    auto [it, inserted] = by_qid.emplace(r.qid, r.correct);
    if (!inserted && it->second != r.correct) {
      throw Error(ErrorCode::ConflictingLabel, r.qid + " labelled both 0 and 1 for " + target_model);
    }
  }
  LabelVector out{manifest.dataset_id, target_model, {}};
  out.labels.reserve(manifest.size());
  for (const auto& qid : manifest.qids) {
    auto it = by_qid.find(qid);
    if (it == by_qid.end()) {
      throw Error(ErrorCode::MissingLabel, qid + " has no label for " + target_model);
    }
    out.labels.push_back(static_cast<std::uint8_t>(it->second));
  }
  return out;
}

// ---------------------------------------------------------------------------

void RepresentationSet::add_layer(LayerMatrix matrix) {
  if (matrix.rows != manifest_.size()) {
    throw Error(ErrorCode::RowCountMismatch,
                matrix.model_id + " layer " + std::to_string(matrix.layer_index) + " has " +
                    std::to_string(matrix.rows) + " rows, manifest has " +
                    std::to_string(manifest_.size()) + " qids");
  }
  if (matrix.dataset_id != manifest_.dataset_id) {
    throw Error(ErrorCode::DatasetMismatch, "layer file for dataset '" + matrix.dataset_id +
                                                "' in manifest for '" + manifest_.dataset_id + "'");
  }
  check_shape(matrix);
  auto key = std::make_pair(matrix.model_id, matrix.layer_index);
  if (layers_.count(key) != 0) {
    throw Error(ErrorCode::DuplicateLayer,
                matrix.model_id + " layer " + std::to_string(matrix.layer_index));
  }
  layers_.emplace(std::move(key), std::move(matrix));
}

void RepresentationSet::add_labels(std::span<const LabelRecord> records) {
  labels_.insert(labels_.end(), records.begin(), records.end());
}

bool RepresentationSet::has_layer(const std::string& model, std::uint32_t layer) const {
  return layers_.count({model, layer}) != 0;
}

const LayerMatrix& RepresentationSet::layer(const std::string& model, std::uint32_t layer) const {
  auto it = layers_.find({model, layer});
  if (it == layers_.end()) {
    throw Error(ErrorCode::MissingLayer, model + " layer " + std::to_string(layer) +
                                             " not present for dataset " + dataset_id());
  }
  return it->second;
}

std::vector<std::uint32_t> RepresentationSet::layers_of(const std::string& model) const {
  std::vector<std::uint32_t> out;
  for (const auto& [key, _] : layers_) {
    if (key.first == model) out.push_back(key.second);
  }
  return out;
}

std::vector<std::string> RepresentationSet::models() const {
  std::vector<std::string> out;
  for (const auto& [key, _] : layers_) {
    if (out.empty() || out.back() != key.first) out.push_back(key.first);
  }
  return out;
}

std::vector<std::string> RepresentationSet::labelled_models() const {
  std::set<std::string> names;
  for (const auto& r : labels_) names.insert(r.model);
  return {names.begin(), names.end()};
}

LabelVector RepresentationSet::labels_for(const std::string& model) const {
  return align_labels(manifest_, labels_, model);
}

// ---------------------------------------------------------------------------

ManifestFile read_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  const fs::path base = path.parent_path();
  ManifestFile out;
  try {
    out.manifest.dataset_id = j.at("dataset_id").get<std::string>();
    out.manifest.qids = j.at("qids").get<std::vector<std::string>>();
    if (j.contains("question_text")) {
      out.manifest.question_text = j["question_text"].get<std::vector<std::string>>();
    }
    for (const auto& l : j.at("layers")) {
      out.layers.push_back({l.at("model_id").get<std::string>(),
                            l.at("layer_index").get<std::uint32_t>(),
                            resolve(base, l.at("path").get<std::string>())});
    }
    if (j.contains("labels")) {
      for (const auto& p : j["labels"]) out.label_files.push_back(resolve(base, p.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  if (!out.manifest.question_text.empty() &&
      out.manifest.question_text.size() != out.manifest.qids.size()) {
    throw Error(ErrorCode::ParseError, "question_text is not parallel to qids");
  }
  std::unordered_set<std::string> seen;
  for (const auto& q : out.manifest.qids) {
    if (!seen.insert(q).second) throw Error(ErrorCode::DuplicateQid, q);
  }
  return out;
}

void write_manifest(const ManifestFile& m, const fs::path& path) {
  const fs::path base = path.parent_path();
  auto rel = [&](const fs::path& p) {
    return (p.is_absolute() && !base.empty()) ? fs::relative(p, base).generic_string()
                                              : p.generic_string();
  };
  json j;
  j["dataset_id"] = m.manifest.dataset_id;
  j["qids"] = m.manifest.qids;
  if (!m.manifest.question_text.empty()) j["question_text"] = m.manifest.question_text;
  j["layers"] = json::array();
  for (const auto& l : m.layers) {
    j["layers"].push_back({{"model_id", l.model_id}, {"layer_index", l.layer_index}, {"path", rel(l.path)}});
  }
  if (!m.label_files.empty()) {
    j["labels"] = json::array();
    for (const auto& p : m.label_files) j["labels"].push_back(rel(p));
  }
  write_text(path, j.dump(2) + "\n");
}

RepresentationSet load_bundle(const fs::path& manifest_path) {
  ManifestFile mf = read_manifest(manifest_path);
  if (mf.layers.empty()) {
    throw Error(ErrorCode::MissingLayerFile, manifest_path.string() + " lists no layer files");
  }
  RepresentationSet reps(mf.manifest);
  for (const auto& ref : mf.layers) {
    if (!fs::exists(ref.path)) throw Error(ErrorCode::MissingLayerFile, ref.path.string());
    LayerMatrix m = read_rep_file(ref.path);
    if (m.model_id != ref.model_id || m.layer_index != ref.layer_index) {
      throw Error(ErrorCode::DatasetMismatch,
                  ref.path.string() + " holds " + m.model_id + " layer " +
                      std::to_string(m.layer_index) + ", manifest says " + ref.model_id +
                      " layer " + std::to_string(ref.layer_index));
    }
    reps.add_layer(std::move(m));
  }
  for (const auto& lf : mf.label_files) {
    if (!fs::exists(lf)) throw Error(ErrorCode::IoFailure, "missing label file " + lf.string());
    reps.add_labels(read_label_records(lf));
  }
  return reps;
}

fs::path write_bundle(const RepresentationSet& reps, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
  ManifestFile mf;
  mf.manifest = reps.manifest();
  for (const auto& model : reps.models()) {
    for (auto layer : reps.layers_of(model)) {
      const fs::path file = dir / (model + "_L" + std::to_string(layer) + ".pkr");
      write_rep_file(reps.layer(model, layer), file);
      mf.layers.push_back({model, layer, file.filename()});
    }
  }
  if (!reps.label_records().empty()) {
    write_label_records(reps.label_records(), dir / "labels.jsonl");
    mf.label_files.push_back("labels.jsonl");
  }
  const fs::path manifest_path = dir / "manifest.json";
  write_manifest(mf, manifest_path);
  return manifest_path;
}

}  // namespace privgap
