#pragma once

#include "sinodenoise/ct_physics.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sd::container {

// A dataset container is a directory: meta.json + data.f32 (little-endian
// 32-bit floats, C-order, frames x rows x cols).
struct DatasetMeta {
  std::int64_t frames = 0, rows = 0, cols = 0;
  std::string dtype = "f32";
  std::string domain;                // projection | transmission | image
  std::vector<double> tube_current;  // per frame (may be empty for images)
  std::vector<double> incident_flux; // per column if known
  double dose_fraction = 1.0;
  double electronic_variance = 0.0;
  double electronic_mean = 0.0;
  std::uint64_t seed = 0;
  std::string provenance;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<float> data; // frames*rows*cols, C-order
};

void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& dir);

// Conversions between containers and the in-memory frame stacks.
Dataset from_stack(const FrameStack& stack, const std::string& domain,
                   std::uint64_t seed, const std::string& provenance);
ProjectionStack to_projection_stack(const Dataset& ds);
TransmissionStack to_transmission_stack(const Dataset& ds);

// A checkpoint is a directory: params.f32 (flat little-endian f32 tensors,
// C-order, concatenated) + manifest.json naming each tensor with its shape
// and byte offset, plus architecture/hyperparameter/seed fields and an
// fnv1a content hash of params.f32.
struct CheckpointTensor {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::string architecture;
  std::map<std::string, std::string> hyperparams;
  std::uint64_t seed = 0;
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& dir);

std::uint64_t fnv1a_hash(const void* data, std::size_t bytes);

} // namespace sd::container
