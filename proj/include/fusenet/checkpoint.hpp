#pragma once

// Parameter checkpoints.
//
// Layout: 8-byte magic "FUSENETC", header length as u64 little-endian,
// UTF-8 JSON header, then every tensor's values as row-major f64
// little-endian in header order.
//
// Header: {"format": 1, "variant": str, "seed": u64, "config_hash": str,
//          "dims": {...}, "tensors": [{"name": str, "shape": [..]}, ...]}

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "fusenet/error.hpp"
#include "fusenet/models.hpp"
#include "fusenet/train.hpp"

namespace fusenet {

inline constexpr std::array<char, 8> kCheckpointMagic = {'F', 'U', 'S', 'E', 'N', 'E', 'T', 'C'};

inline nlohmann::json to_json(const ModelDims& d) {
  return nlohmann::json{{"num_nodes", d.num_nodes}, {"d_text", d.d_text},   {"d_in", d.d_in},
                        {"heads", d.heads},         {"d_head", d.d_head},   {"d_graph", d.d_graph},
                        {"d_fuse", d.d_fuse},       {"d_mlp", d.d_mlp}};
}

inline ModelDims dims_from_json(const nlohmann::json& j, ModelDims d = {}) {
  d.num_nodes = j.value("num_nodes", d.num_nodes);
  d.d_text = j.value("d_text", d.d_text);
  d.d_in = j.value("d_in", d.d_in);
  d.heads = j.value("heads", d.heads);
  d.d_head = j.value("d_head", d.d_head);
  d.d_graph = j.value("d_graph", d.d_graph);
  d.d_fuse = j.value("d_fuse", d.d_fuse);
  d.d_mlp = j.value("d_mlp", d.d_mlp);
  return d;
}

struct Checkpoint {
  ModelState model;
  std::string config_hash;
};

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const ModelState& model,
                            const std::string& config_hash) {
  nlohmann::json header{{"format", 1},
                        {"variant", variant_name(model.variant)},
                        {"seed", model.seed},
                        {"config_hash", config_hash},
                        {"dims", to_json(model.dims)},
                        {"tensors", nlohmann::json::array()}};
  for (const auto& [name, t] : model.params) header["tensors"].push_back({{"name", name}, {"shape", t.shape()}});
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : model.params)
    for (double v : t.values()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw DataError("'" + path.string() + "' is not a checkpoint");
  }
  const std::uint64_t len = detail::get_u64(in);
  if (len > (1u << 26)) throw DataError("checkpoint header too large");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw DataError("checkpoint truncated");

  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(text);
    if (header.at("format").get<int>() != 1) throw DataError("unsupported checkpoint format");
    ck.model.variant = parse_variant(header.at("variant").get<std::string>());
    ck.model.seed = header.at("seed").get<std::uint64_t>();
    ck.model.dims = dims_from_json(header.at("dims"));
    ck.config_hash = header.at("config_hash").get<std::string>();
    for (const auto& spec : header.at("tensors")) {
      Shape shape = spec.at("shape").get<Shape>();
      Tensor t(shape);
      for (auto& v : t.values()) v = std::bit_cast<double>(detail::get_u64(in));
      ck.model.params.add(spec.at("name").get<std::string>(), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad checkpoint header in '" + path.string() + "': " + e.what());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes in checkpoint '" + path.string() + "'");
  return ck;
}

}  // namespace fusenet
