#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "extabs/model.hpp"
#include "extabs/textproc.hpp"

namespace extabs {

// Versioned binary container: magic, format version, a JSON header (model
// dimensions, vocabulary, resolved run config, tensor directory), then raw
// little-endian float64 payloads in directory order. Serialization is
// byte-stable for identical weights.
std::vector<std::uint8_t> serialize_checkpoint(const ExtAbsModel& model, const Vocabulary& vocab,
                                               const std::string& run_config_json);

void save_checkpoint(const std::string& path, const ExtAbsModel& model, const Vocabulary& vocab,
                     const std::string& run_config_json);
void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

struct LoadedCheckpoint {
  ExtAbsModel model;
  Vocabulary vocab;
  std::string run_config_json;
};

LoadedCheckpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes);
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace extabs
