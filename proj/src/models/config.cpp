#include <nlohmann/json.hpp>
#include <string>

#include "cropsits/error.hpp"
#include "cropsits/models/cnn.hpp"
#include "cropsits/models/psetae.hpp"

namespace cropsits::models {

namespace {

nlohmann::json parse_object(const std::string& text, const std::string& origin) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": " + e.what());
  }
}

}  // namespace

std::string cnn_config_to_json(const CnnConfig& config) {
  nlohmann::json j;
  j["in_channels"] = config.in_channels;
  j["height"] = config.height;
  j["width"] = config.width;
  j["classes"] = config.classes;
  j["stem"] = config.stem;
  j["block1"] = config.block1;
  j["block2"] = config.block2;
  j["head_hidden"] = config.head_hidden;
  return j.dump(2) + "\n";
}

CnnConfig cnn_config_from_json(const std::string& text, const std::string& origin) {
  const nlohmann::json j = parse_object(text, origin);
  CnnConfig config;
  try {
    config.in_channels = j.value("in_channels", config.in_channels);
    config.height = j.value("height", config.height);
    config.width = j.value("width", config.width);
    config.classes = j.value("classes", config.classes);
    config.stem = j.value("stem", config.stem);
    config.block1 = j.value("block1", config.block1);
    config.block2 = j.value("block2", config.block2);
    config.head_hidden = j.value("head_hidden", config.head_hidden);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(origin + ": " + e.what());
  }
  config.validate();
  return config;
}

std::string psetae_config_to_json(const PsetaeConfig& config) {
  nlohmann::json j;
  j["bands"] = config.bands;
  j["pixels"] = config.pixels;
  j["t_max"] = config.t_max;
  j["classes"] = config.classes;
  j["mlp1_hidden"] = config.mlp1_hidden;
  j["mlp1_out"] = config.mlp1_out;
  j["d_model"] = config.d_model;
  j["heads"] = config.heads;
  j["d_k"] = config.d_k;
  j["mlp3_out"] = config.mlp3_out;
  j["dec_hidden1"] = config.dec_hidden1;
  j["dec_hidden2"] = config.dec_hidden2;
  return j.dump(2) + "\n";
}

PsetaeConfig psetae_config_from_json(const std::string& text, const std::string& origin) {
  const nlohmann::json j = parse_object(text, origin);
  PsetaeConfig config;
  try {
    config.bands = j.value("bands", config.bands);
    config.pixels = j.value("pixels", config.pixels);
    config.t_max = j.value("t_max", config.t_max);
    config.classes = j.value("classes", config.classes);
    config.mlp1_hidden = j.value("mlp1_hidden", config.mlp1_hidden);
    config.mlp1_out = j.value("mlp1_out", config.mlp1_out);
    config.d_model = j.value("d_model", config.d_model);
    config.heads = j.value("heads", config.heads);
    config.d_k = j.value("d_k", config.d_k);
    config.mlp3_out = j.value("mlp3_out", config.mlp3_out);
    config.dec_hidden1 = j.value("dec_hidden1", config.dec_hidden1);
    config.dec_hidden2 = j.value("dec_hidden2", config.dec_hidden2);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(origin + ": " + e.what());
  }
  config.validate();
  return config;
}

}  // namespace cropsits::models
