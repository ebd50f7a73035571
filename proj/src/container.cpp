#include "sinodenoise/container.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace sd::container {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_file(const fs::path& p, const void* data, std::size_t bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open for writing: " + p.string());
  out.write(static_cast<const char*>(data), std::streamsize(bytes));
  if (!out) throw ValidationError("write failed: " + p.string());
}

std::vector<char> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary | std::ios::ate);
  if (!in) throw ValidationError("cannot open: " + p.string());
  const auto bytes = in.tellg();
  in.seekg(0);
  std::vector<char> buf(static_cast<std::size_t>(bytes), '\0');
  in.read(buf.data(), bytes);
  if (!in) throw ValidationError("read failed: " + p.string());
  return buf;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot open: " + p.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("bad JSON in " + p.string() + ": " + e.what());
  }
  return j;
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw ValidationError("cannot open for writing: " + p.string());
  out << j.dump(2) << "\n";
}

} // namespace

std::uint64_t fnv1a_hash(const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
  const auto n =
      std::size_t(ds.meta.frames) * std::size_t(ds.meta.rows) * std::size_t(ds.meta.cols);
  if (ds.data.size() != n)
    throw ValidationError("write_dataset: data size does not match meta shape");
  if (ds.meta.domain != "projection" && ds.meta.domain != "transmission" &&
      ds.meta.domain != "image")
    throw ValidationError("write_dataset: unknown domain tag '" + ds.meta.domain + "'");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create directory: " + dir.string());

  json j;
  j["shape"] = {ds.meta.frames, ds.meta.rows, ds.meta.cols};
  j["dtype"] = ds.meta.dtype;
  j["domain"] = ds.meta.domain;
  j["tube_current"] = ds.meta.tube_current;
  j["incident_flux"] = ds.meta.incident_flux;
  j["dose_fraction"] = ds.meta.dose_fraction;
  j["electronic_variance"] = ds.meta.electronic_variance;
  j["electronic_mean"] = ds.meta.electronic_mean;
  j["seed"] = ds.meta.seed;
  j["provenance"] = ds.meta.provenance;
  write_json(dir / "meta.json", j);
  write_file(dir / "data.f32", ds.data.data(), ds.data.size() * sizeof(float));
}

Dataset read_dataset(const fs::path& dir) {
  const json j = read_json(dir / "meta.json");
  Dataset ds;
  try {
    const auto shape = j.at("shape").get<std::vector<std::int64_t>>();
    if (shape.size() != 3) throw ValidationError("meta shape must have 3 dims");
    ds.meta.frames = shape[0];
    ds.meta.rows = shape[1];
    ds.meta.cols = shape[2];
    ds.meta.dtype = j.at("dtype").get<std::string>();
    ds.meta.domain = j.at("domain").get<std::string>();
    ds.meta.tube_current = j.at("tube_current").get<std::vector<double>>();
    ds.meta.incident_flux = j.at("incident_flux").get<std::vector<double>>();
    ds.meta.dose_fraction = j.at("dose_fraction").get<double>();
    ds.meta.electronic_variance = j.at("electronic_variance").get<double>();
    ds.meta.electronic_mean = j.at("electronic_mean").get<double>();
    ds.meta.seed = j.at("seed").get<std::uint64_t>();
    ds.meta.provenance = j.at("provenance").get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError("bad dataset meta in " + dir.string() + ": " + e.what());
  }
  if (ds.meta.dtype != "f32")
    throw ValidationError("unsupported dtype: " + ds.meta.dtype);
  const auto buf = read_file(dir / "data.f32");
  const auto n =
      std::size_t(ds.meta.frames) * std::size_t(ds.meta.rows) * std::size_t(ds.meta.cols);
  if (buf.size() != n * sizeof(float))
    throw ValidationError("data.f32 size does not match meta shape in " + dir.string());
  ds.data.resize(n);
  std::memcpy(ds.data.data(), buf.data(), buf.size());
  return ds;
}

Dataset from_stack(const FrameStack& stack, const std::string& domain,
                   std::uint64_t seed, const std::string& provenance) {
  Dataset ds;
  ds.meta.frames = stack.frames;
  ds.meta.rows = stack.rows;
  ds.meta.cols = stack.cols;
  ds.meta.domain = domain;
  ds.meta.tube_current = stack.meta.tube_current;
  ds.meta.incident_flux = stack.meta.incident_flux;
  ds.meta.dose_fraction = stack.meta.dose_fraction;
  ds.meta.electronic_variance = stack.meta.electronic_variance;
  ds.meta.electronic_mean = stack.meta.electronic_mean;
  ds.meta.seed = seed;
  ds.meta.provenance = provenance;
  ds.data = stack.data;
  return ds;
}

namespace {
void fill_stack(FrameStack& s, const Dataset& ds) {
  s.frames = int(ds.meta.frames);
  s.rows = int(ds.meta.rows);
  s.cols = int(ds.meta.cols);
  s.data = ds.data;
  s.meta.tube_current = ds.meta.tube_current;
  s.meta.incident_flux = ds.meta.incident_flux;
  s.meta.dose_fraction = ds.meta.dose_fraction;
  s.meta.electronic_variance = ds.meta.electronic_variance;
  s.meta.electronic_mean = ds.meta.electronic_mean;
}
} // namespace

ProjectionStack to_projection_stack(const Dataset& ds) {
  if (ds.meta.domain != "projection")
    throw ValidationError("expected projection-domain container, got " + ds.meta.domain);
  ProjectionStack s;
  fill_stack(s, ds);
  return s;
}

TransmissionStack to_transmission_stack(const Dataset& ds) {
  if (ds.meta.domain != "transmission")
    throw ValidationError("expected transmission-domain container, got " + ds.meta.domain);
  TransmissionStack s;
  fill_stack(s, ds);
  return s;
}

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void write_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create directory: " + dir.string());

  std::vector<float> flat;
  json tensors = json::array();
  for (const auto& t : ckpt.tensors) {
    std::int64_t n = 1;
    for (auto d : t.shape) n *= d;
    if (std::size_t(n) != t.values.size())
      throw ValidationError("checkpoint tensor '" + t.name + "': shape/value mismatch");
    tensors.push_back({{"name", t.name},
                       {"shape", t.shape},
                       {"offset", flat.size() * sizeof(float)}});
    flat.insert(flat.end(), t.values.begin(), t.values.end());
  }
  json j;
  j["architecture"] = ckpt.architecture;
  j["hyperparams"] = ckpt.hyperparams;
  j["seed"] = ckpt.seed;
  j["tensors"] = tensors;
  j["content_hash"] = fnv1a_hash(flat.data(), flat.size() * sizeof(float));
  write_json(dir / "manifest.json", j);
  write_file(dir / "params.f32", flat.data(), flat.size() * sizeof(float));
}

Checkpoint read_checkpoint(const fs::path& dir) {
  const json j = read_json(dir / "manifest.json");
  const auto buf = read_file(dir / "params.f32");
  Checkpoint ckpt;
  try {
    ckpt.architecture = j.at("architecture").get<std::string>();
    ckpt.hyperparams = j.at("hyperparams").get<std::map<std::string, std::string>>();
    ckpt.seed = j.at("seed").get<std::uint64_t>();
    const auto expected = j.at("content_hash").get<std::uint64_t>();
    if (expected != fnv1a_hash(buf.data(), buf.size()))
      throw ValidationError("checkpoint content hash mismatch in " + dir.string());
    for (const auto& tj : j.at("tensors")) {
      CheckpointTensor t;
      t.name = tj.at("name").get<std::string>();
      t.shape = tj.at("shape").get<std::vector<std::int64_t>>();
      const auto offset = tj.at("offset").get<std::size_t>();
      std::int64_t n = 1;
      for (auto d : t.shape) n *= d;
      if (offset + std::size_t(n) * sizeof(float) > buf.size())
        throw ValidationError("checkpoint tensor '" + t.name + "' out of bounds");
      t.values.resize(std::size_t(n));
      std::memcpy(t.values.data(), buf.data() + offset, std::size_t(n) * sizeof(float));
      ckpt.tensors.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw ValidationError("bad checkpoint manifest in " + dir.string() + ": " + e.what());
  }
  return ckpt;
}

} // namespace sd::container
