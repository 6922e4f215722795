#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xdecode/datapipe.hpp"
#include "xdecode/trainer.hpp"

namespace xdecode {

// A complete experiment: what to train on, how, and which frozen test
// manifests to score afterwards.
struct ExperimentSpec {
  std::string name = "experiment";
  DatasetSpec train_corpus;
  std::vector<std::filesystem::path> test_manifests;
  TrainConfig train;

  void validate() const;
};

// JSON config files. Parsing is strict: unknown keys fail naming the
// key, wrong value kinds fail naming key and expected type, malformed
// JSON fails with the line number. Missing keys take the documented
// struct defaults. An optional top-level "profile" ("desk" or "paper")
// picks the training baseline the explicit keys then override.
ExperimentSpec parse_config(const std::filesystem::path& path);
ExperimentSpec parse_config_text(const std::string& text, const std::string& origin);
std::string serialize(const ExperimentSpec& spec);

// TrainConfig alone, used inside checkpoints.
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

}  // namespace xdecode
