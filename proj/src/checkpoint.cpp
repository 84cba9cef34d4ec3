// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmq/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dmq/error.hpp"
#include "dmq/hash.hpp"

namespace dmq {

using json = nlohmann::ordered_json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write file: " + path);
    out << contents;
    if (!out) throw DataError("write failed: " + path);
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw DataError("cannot move " + tmp + " into place: " + ec.message());
}

json checkpoint_to_json(const DenoiserModel& model, const NoiseSchedule& sched) {
  json doc;
  doc["format"] = "dmq-checkpoint";
  doc["format_version"] = kCheckpointFormatVersion;
  doc["schedule"] = {{"kind", std::string(to_string(sched.kind()))},
                     {"T", sched.T()},
                     {"alpha_bar", sched.alpha_bar()}};
  doc["data_dim"] = model.data_dim();
  doc["time_embed_dim"] = model.time_embed_dim();
  doc["cond_embed_dim"] = model.cond_embed_dim();
  json layers = json::array();
  for (const AffineLayer& l : model.layers()) {
    layers.push_back({{"name", l.name},
                      {"in", l.in_dim()},
                      {"out", l.out_dim()},
                      {"activation", l.activation == Activation::kSiLU ? "silu" : "none"},
                      {"weight", l.weight.data()},
                      {"bias", l.bias}});
  }
  doc["layers"] = std::move(layers);
  return doc;
}

Checkpoint checkpoint_from_json(const json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "dmq-checkpoint")
      throw DataError("not a dmq checkpoint");
    const int version = doc.at("format_version").get<int>();
    if (version < 1 || version > kCheckpointFormatVersion)
      throw DataError("unsupported checkpoint format_version " + std::to_string(version));
    const json& s = doc.at("schedule");
    auto alpha_bar = s.at("alpha_bar").get<std::vector<double>>();
    if (static_cast<int>(alpha_bar.size()) != s.at("T").get<int>())
      throw DataError("schedule T does not match alpha_bar length");
    NoiseSchedule sched(parse_schedule_kind(s.at("kind").get<std::string>()),
                        std::move(alpha_bar));
    std::vector<AffineLayer> layers;
    for (const json& jl : doc.at("layers")) {
      AffineLayer l;
      l.name = jl.at("name").get<std::string>();
      const auto in = jl.at("in").get<std::size_t>();
      const auto out = jl.at("out").get<std::size_t>();
      const auto act = jl.at("activation").get<std::string>();
      if (act != "silu" && act != "none") throw DataError("unknown activation: " + act);
      l.activation = act == "silu" ? Activation::kSiLU : Activation::kNone;
      l.weight = Tensor2D(in, out, jl.at("weight").get<std::vector<double>>());
      l.bias = jl.at("bias").get<std::vector<double>>();
      layers.push_back(std::move(l));
    }
    DenoiserModel model(doc.at("data_dim").get<std::size_t>(),
                        doc.at("time_embed_dim").get<std::size_t>(),
                        doc.at("cond_embed_dim").get<std::size_t>(), std::move(layers),
                        /*allow_shallow=*/true);
    return {std::move(model), std::move(sched)};
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ArgumentError& e) {
    throw DataError(std::string("invalid checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const DenoiserModel& model,
                     const NoiseSchedule& sched) {
  write_file(path, checkpoint_to_json(model, sched).dump(1) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path + " is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(doc);
}

std::uint64_t model_hash(const DenoiserModel& model, const NoiseSchedule& sched) {
  return fnv1a64(checkpoint_to_json(model, sched).dump());
}

}  // namespace dmq
