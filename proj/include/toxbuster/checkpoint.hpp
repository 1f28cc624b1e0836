#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "toxbuster/context.hpp"
#include "toxbuster/encoder.hpp"
#include "toxbuster/tokenizer.hpp"

namespace toxbuster {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Trained model bundle: configuration, context assembly options, vocabulary and
/// 32-bit parameters.
struct Checkpoint {
  EncoderConfig config;
  ContextOptions context;
  Vocabulary vocab;
  Parameters<float> params;
};

void to_json(nlohmann::json &j, const ContextOptions &o);
void from_json(const nlohmann::json &j, ContextOptions &o);

/// Little-endian layout:
///   "TOXBCKPT" | u32 version | u32 reserved | u64 n | n bytes of header JSON
///   | u64 vocab offset | u64 vocab bytes | u64 parameter count
///   | f32 parameters in declared tensor order | vocabulary file | u64 FNV-1a of all prior bytes
void save_checkpoint(const std::filesystem::path &path, const Parameters<float> &params, const Vocabulary &vocab,
                     const ContextOptions &context);
/// Throws IntegrityError on bad magic, unsupported version, truncation or checksum mismatch.
Checkpoint load_checkpoint(const std::filesystem::path &path);

/// Loads a checkpoint whose configuration should equal `expected` apart from the
/// vocabulary size. A mismatch logs a warning and throws ConfigError unless `force`.
Checkpoint load_for_finetune(const std::filesystem::path &path, const EncoderConfig &expected, bool force);

/// FNV-1a of the file bytes, hex encoded; identifies a checkpoint in service responses.
std::string file_hash(const std::filesystem::path &path);

} // namespace toxbuster
