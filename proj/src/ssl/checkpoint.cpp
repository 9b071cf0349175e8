// SPDX-License-Identifier: Apache-2.0
#include "porc/ssl/checkpoint.hpp"

#include <cstring>

#include "porc/error.hpp"
#include "porc/util/binary_io.hpp"

namespace porc::ssl {

using nc::Tensor;
using nlohmann::json;

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_tensor(std::vector<std::uint8_t>& out, const std::string& name, const Tensor& t) {
  io::put_u32(out, static_cast<std::uint32_t>(name.size()));
  io::put_bytes(out, name);
  io::put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) io::put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.data()) io::put_f64(out, v);
}

std::pair<std::string, Tensor> get_tensor(io::Reader& r) {
  std::string name = r.bytes(r.u32());
  const std::uint32_t rank = r.u32();
  if (rank > 4) throw data_error("checkpoint: tensor '" + name + "' has rank " + std::to_string(rank));
  nc::Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.u32());
  const std::size_t n = nc::shape_size(shape);
  if (n * 8 > r.remaining()) throw data_error("checkpoint: tensor '" + name + "' truncated");
  std::vector<double> data(n);
  for (auto& v : data) v = r.f64();
  return {std::move(name), Tensor(std::move(shape), std::move(data))};
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const SslHyper& hyper, const SslState& state) {
  std::vector<std::uint8_t> out;
  io::put_bytes(out, "POCK");
  io::put_u32(out, kCheckpointVersion);
  json header = {{"hyper", to_json(hyper)},
                 {"step", state.step},
                 {"epoch", state.epoch},
                 {"adam_step", state.optimizer.step_count()}};
  const std::string text = header.dump();
  io::put_u32(out, static_cast<std::uint32_t>(text.size()));
  io::put_bytes(out, text);

  const auto& m = state.optimizer.first_moments();
  const auto& v = state.optimizer.second_moments();
  io::put_u32(out, static_cast<std::uint32_t>(state.student.size() + state.teacher.size() + 2 + m.size() + v.size()));
  for (const auto& [name, t] : state.student) put_tensor(out, "student." + name, t);
  for (const auto& [name, t] : state.teacher) put_tensor(out, "teacher." + name, t);
  put_tensor(out, "center.dino", state.dino_center);
  put_tensor(out, "center.ibot", state.ibot_center);
  for (std::size_t i = 0; i < m.size(); ++i) put_tensor(out, "adam.m." + std::to_string(i), m[i]);
  for (std::size_t i = 0; i < v.size(); ++i) put_tensor(out, "adam.v." + std::to_string(i), v[i]);
  return out;
}

Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
  io::Reader r(bytes.data(), bytes.size(), "checkpoint");
  if (r.bytes(4) != "POCK") throw data_error("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw data_error("checkpoint: unsupported version " + std::to_string(version));
  json header;
  try {
    header = json::parse(r.bytes(r.u32()));
  } catch (const json::exception& e) {
    throw data_error(std::string("checkpoint: bad header: ") + e.what());
  }
  Checkpoint ck;
  ck.hyper = hyper_from_json(header.at("hyper"));
  ck.state.step = header.at("step");
  ck.state.epoch = header.at("epoch");
  ck.state.optimizer = nc::AdamW(ck.hyper.adamw);

  std::map<std::size_t, Tensor> m, v;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, t] = get_tensor(r);
    if (name.rfind("student.", 0) == 0) {
      t.set_requires_grad(true);
      ck.state.student.emplace(name.substr(8), std::move(t));
    } else if (name.rfind("teacher.", 0) == 0) {
      ck.state.teacher.emplace(name.substr(8), std::move(t));
    } else if (name == "center.dino") {
      ck.state.dino_center = std::move(t);
    } else if (name == "center.ibot") {
      ck.state.ibot_center = std::move(t);
    } else if (name.rfind("adam.m.", 0) == 0) {
      m.emplace(std::stoul(name.substr(7)), std::move(t));
    } else if (name.rfind("adam.v.", 0) == 0) {
      v.emplace(std::stoul(name.substr(7)), std::move(t));
    } else {
      throw data_error("checkpoint: unknown tensor '" + name + "'");
    }
  }
  if (r.remaining() != 0) throw data_error("checkpoint: trailing bytes");
  if (ck.state.student.empty() || ck.state.student.size() != ck.state.teacher.size()) {
    throw data_error("checkpoint: student/teacher parameter sets differ");
  }
  std::vector<Tensor> mv, vv;
  for (auto& [_, t] : m) mv.push_back(std::move(t));
  for (auto& [_, t] : v) vv.push_back(std::move(t));
  ck.state.optimizer.restore(header.at("adam_step").get<std::int64_t>(), std::move(mv), std::move(vv));
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const SslHyper& hyper, const SslState& state) {
  io::write_file(path, serialize_checkpoint(hyper, state));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(io::read_file(path)); }

void save_features(const std::filesystem::path& path, const Tensor& features) {
  std::vector<std::uint8_t> out;
  io::put_bytes(out, "FEAT");
  io::put_u32(out, static_cast<std::uint32_t>(features.rows()));
  io::put_u32(out, static_cast<std::uint32_t>(features.cols()));
  for (double v : features.data()) io::put_f32(out, static_cast<float>(v));
  io::write_file(path, out);
}

Tensor load_features(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::Reader r(bytes.data(), bytes.size(), path.string());
  if (r.bytes(4) != "FEAT") throw data_error(path.string() + ": not a feature file");
  const std::size_t rows = r.u32(), dim = r.u32();
  if (rows * dim * 4 != r.remaining()) throw data_error(path.string() + ": feature payload size mismatch");
  std::vector<double> data(rows * dim);
  for (auto& x : data) x = r.f32();
  return Tensor({rows, dim}, std::move(data));
}

}  // namespace porc::ssl
