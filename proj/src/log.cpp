#include "privgap/log.hpp"
#include "privgap/error.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace privgap {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::TrailingData: return "TrailingData";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::RowCountMismatch: return "RowCountMismatch";
    case ErrorCode::DuplicateQid: return "DuplicateQid";
    case ErrorCode::DuplicateLayer: return "DuplicateLayer";
    case ErrorCode::DatasetMismatch: return "DatasetMismatch";
    case ErrorCode::MissingLayerFile: return "MissingLayerFile";
    case ErrorCode::MissingLabel: return "MissingLabel";
    case ErrorCode::NonBinaryLabel: return "NonBinaryLabel";
    case ErrorCode::ConflictingLabel: return "ConflictingLabel";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::TooFewExamples: return "TooFewExamples";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::TooFewPerClass: return "TooFewPerClass";
    case ErrorCode::FoldClassCollapse: return "FoldClassCollapse";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::TooFewFolds: return "TooFewFolds";
    case ErrorCode::EmptyExternalSet: return "EmptyExternalSet";
    case ErrorCode::DegenerateBaseline: return "DegenerateBaseline";
    case ErrorCode::MissingLayer: return "MissingLayer";
    case ErrorCode::SubsetTooSmall: return "SubsetTooSmall";
    case ErrorCode::EmptyReport: return "EmptyReport";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::Unreachable: return "Unreachable";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

namespace log {
namespace {

Level level_from_env() {
  const char* raw = std::getenv("PRIVGAP_LOG");
  if (raw == nullptr) return Level::Error;
  const std::string value(raw);
  if (value == "debug") return Level::Debug;
  if (value == "info") return Level::Info;
  return Level::Error;
}

std::atomic<int>& current() {
  static std::atomic<int> level{static_cast<int>(level_from_env())};
  return level;
}

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

Level threshold() { return static_cast<Level>(current().load()); }

void set_threshold(Level level) { current().store(static_cast<int>(level)); }

void write(Level level, std::string_view message) {
  if (static_cast<int>(level) > current().load()) return;
  static constexpr std::string_view tags[] = {"error", "info", "debug"};
  std::lock_guard lock(sink_mutex());
  std::cerr << "[privgap " << tags[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace log
}  // namespace privgap
