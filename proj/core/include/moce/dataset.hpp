// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moce/tensor.hpp"

namespace moce::io {

// In-memory image corpus. On disk ("MOCD", little-endian):
//   magic | u16 version | u32 count | u16 height | u16 width | u16 channels
//   count records of { u16 class id | u8 domain id | u8 pixels, row-major
//   channel-last }
// Pixels map to [0, 1] as v / 255 on load; the u8 payload is the source of
// truth so round trips are exact.
class Dataset {
 public:
  static constexpr std::uint16_t kFormatVersion = 1;

  int height = 0, width = 0, channels = 0;
  std::vector<std::uint16_t> class_ids;
  std::vector<std::uint8_t> domain_ids;
  std::vector<std::uint8_t> pixels;  // count * h * w * c

  int count() const { return static_cast<int>(class_ids.size()); }
  std::size_t image_bytes() const {
    return static_cast<std::size_t>(height) * width * channels;
  }
  // h x w x c tensor with values in [0, 1].
  Tensor image(int index) const;
  std::vector<Tensor> images() const;
  // Subset with the given record indices, in order.
  Dataset subset(const std::vector<int>& indices) const;
  // All records whose domain id matches.
  Dataset domain_subset(int domain_id) const;
  std::vector<int> distinct_classes() const;
};

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// ---------------------------------------------------------------------------
// Synthetic corpus generation.

struct DomainSpec {
  std::string family;  // "textured_blobs" | "oriented_gratings"
  int classes = 8;
};

struct CorpusConfig {
  int image_size = 32;
  int images_per_class = 200;
  std::uint64_t seed = 1;
  std::vector<DomainSpec> domains;
  // Generator self-test: a linear probe on pixel statistics must separate the
  // domains at least this well, else generation fails loudly.
  double separability_threshold = 0.95;
};

struct GenReport {
  double domain_probe_accuracy = 0.0;
};

// Deterministic per seed; class ids are disjoint across domains (domain d's
// classes start after domain d-1's). Runs the separability self-test.
Dataset gen_synthetic(const CorpusConfig& config, GenReport* report = nullptr);

// Pixel-statistics linear probe used by the self-test (exposed for tests):
// trains a softmax regression on simple per-image statistics, 80/20 split,
// returns held-out domain classification accuracy.
double domain_separability_probe(const Dataset& ds, std::uint64_t seed);

}  // namespace moce::io
