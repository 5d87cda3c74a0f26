#pragma once

#include <map>
#include <string>
#include <vector>

#include "msb/models.hpp"

namespace msb::checkpoint {

struct Sidecar {
  std::string model_kind;
  std::string fusion_method;
  std::string encoder_name;
  std::string grid;
  int epoch = -1;
  double validation_metric = 0.0;
};

// Binary parameter dump: named float32 tensors, little-endian, plus a JSON
// sidecar written next to it as <path>.json.
void save(models::Model& model, const Sidecar& sidecar, const std::string& path);
void load(models::Model& model, const std::string& path);
Sidecar read_sidecar(const std::string& path);

}  // namespace msb::checkpoint
