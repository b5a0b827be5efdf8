#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "bssgan/adam.hpp"
#include "bssgan/network.hpp"
#include "bssgan/tensor.hpp"

namespace bssgan {

namespace fs = std::filesystem;

/// Checkpoint directory layout:
///   manifest.json  - {"fingerprint": ..., "tensors": [{name, shape, offset}]}
///   params.bin     - little-endian float32 payload, row-major, manifest order
/// Adam moments live under "adam/<param>/m|v", the step counter under
/// "adam/t"; BN running stats keep their "running/" names.
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kPayloadFile = "params.bin";

namespace detail {

inline void write_f32_le(std::ofstream& os, const std::vector<float>& v) {
  static_assert(sizeof(float) == 4);
  // Little-endian hosts only; fine for every target this project builds on.
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * 4));
}

}  // namespace detail

inline void save_checkpoint(const fs::path& dir, const Params& params,
                            std::uint64_t fingerprint,
                            const AdamState<float>* opt = nullptr) {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["fingerprint"] = fingerprint;
  auto tensors = nlohmann::json::array();
  std::ofstream bin(dir / kPayloadFile, std::ios::binary);
  check(bin.good(), "cannot write " + (dir / kPayloadFile).string());
  std::uint64_t offset = 0;
  auto emit = [&](const std::string& name, const Tensor<float>& t) {
    tensors.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
    detail::write_f32_le(bin, t.data);
    offset += t.numel() * 4;
  };
  for (const auto& name : params.names()) emit(name, params.at(name));
  if (opt) {
    for (const auto& [name, m] : opt->m) emit(std::string(kAdamPrefix) + name + "/m", m);
    for (const auto& [name, v] : opt->v) emit(std::string(kAdamPrefix) + name + "/v", v);
    emit(std::string(kAdamPrefix) + "t",
         Tensor<float>::scalar(static_cast<float>(opt->t)));
  }
  manifest["tensors"] = tensors;
  std::ofstream mf(dir / kManifestFile);
  mf << manifest.dump(2) << '\n';
}

struct Checkpoint {
  std::uint64_t fingerprint = 0;
  Params params;
  AdamState<float> opt;
  bool has_opt = false;
};

inline Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream mf(dir / kManifestFile);
  check(mf.good(), "missing checkpoint manifest at " + (dir / kManifestFile).string());
  nlohmann::json manifest = nlohmann::json::parse(mf);
  std::ifstream bin(dir / kPayloadFile, std::ios::binary);
  check(bin.good(), "missing checkpoint payload at " + (dir / kPayloadFile).string());

  Checkpoint ck;
  ck.fingerprint = manifest.at("fingerprint").get<std::uint64_t>();
  for (const auto& entry : manifest.at("tensors")) {
    std::string name = entry.at("name").get<std::string>();
    Shape shape = entry.at("shape").get<Shape>();
    Tensor<float> t(shape);
    bin.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    bin.read(reinterpret_cast<char*>(t.data.data()),
             static_cast<std::streamsize>(t.numel() * 4));
    check(bin.good(), "truncated checkpoint payload while reading " + name);
    if (name.rfind(kAdamPrefix, 0) == 0) {
      ck.has_opt = true;
      std::string rest = name.substr(std::string(kAdamPrefix).size());
      if (rest == "t") {
        ck.opt.t = static_cast<long>(t.item());
      } else if (rest.size() > 2 && rest.compare(rest.size() - 2, 2, "/m") == 0) {
        ck.opt.m.emplace(rest.substr(0, rest.size() - 2), std::move(t));
      } else if (rest.size() > 2 && rest.compare(rest.size() - 2, 2, "/v") == 0) {
        ck.opt.v.emplace(rest.substr(0, rest.size() - 2), std::move(t));
      } else {
        throw std::invalid_argument("unrecognized optimizer tensor " + name);
      }
    } else {
      ck.params.insert(name, std::move(t));
    }
  }
  return ck;
}

/// Loads a checkpoint and rejects it unless its fingerprint matches the spec.
inline Params load_params_checked(const fs::path& dir, const NetworkSpec& spec) {
  Checkpoint ck = load_checkpoint(dir);
  if (ck.fingerprint != spec.fingerprint())
    throw std::invalid_argument("checkpoint at " + dir.string() +
                                " was written for a different network layout");
  return std::move(ck.params);
}

}  // namespace bssgan
