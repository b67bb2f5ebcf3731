#pragma once

#include "catnet/synthetic.hpp"
#include "catnet/trainer.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace catnet {

/// Plain "key = value" text; '#' starts a comment.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);

/// Named starting points: "toy" (default training profile) and "tiny" (3 classes,
/// smooth adapter activation; the gradient-check profile).
TrainConfig profile_config(const std::string& name);

/// Applies the recognized keys; an unknown key is an error.
void apply_train_config(const KeyValues& kv, TrainConfig& config);
void apply_generator_config(const KeyValues& kv, GeneratorSpec& spec);

/// "0,1;2,3" -> {{0,1},{2,3}}
std::vector<std::vector<int>> parse_groups(const std::string& text);
bool parse_bool(const std::string& text);

}  // namespace catnet
