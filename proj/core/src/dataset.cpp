// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#include "moce/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>

#include "moce/checkpoint.hpp"
#include "moce/rng.hpp"

namespace moce::io {

Tensor Dataset::image(int index) const {
  if (index < 0 || index >= count()) throw Error("dataset: image index out of range");
  Tensor img = Tensor::zeros({height, width, channels});
  const std::uint8_t* src = pixels.data() + static_cast<std::size_t>(index) * image_bytes();
  for (std::size_t i = 0; i < img.numel(); ++i) img.data[i] = src[i] / 255.0;
  return img;
}

std::vector<Tensor> Dataset::images() const {
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(count()));
  for (int i = 0; i < count(); ++i) out.push_back(image(i));
  return out;
}

Dataset Dataset::subset(const std::vector<int>& indices) const {
  Dataset out;
  out.height = height;
  out.width = width;
  out.channels = channels;
  out.pixels.reserve(indices.size() * image_bytes());
  for (int i : indices) {
    if (i < 0 || i >= count()) throw Error("dataset: subset index out of range");
    out.class_ids.push_back(class_ids[static_cast<std::size_t>(i)]);
    out.domain_ids.push_back(domain_ids[static_cast<std::size_t>(i)]);
    const std::uint8_t* src = pixels.data() + static_cast<std::size_t>(i) * image_bytes();
    out.pixels.insert(out.pixels.end(), src, src + image_bytes());
  }
  return out;
}

Dataset Dataset::domain_subset(int domain_id) const {
  std::vector<int> idx;
  for (int i = 0; i < count(); ++i) {
    if (domain_ids[static_cast<std::size_t>(i)] == domain_id) idx.push_back(i);
  }
  return subset(idx);
}

std::vector<int> Dataset::distinct_classes() const {
  std::set<int> s(class_ids.begin(), class_ids.end());
  return std::vector<int>(s.begin(), s.end());
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::string out;
  out.append("MOCD", 4);
  auto put16 = [&](std::uint16_t v) { out.append(reinterpret_cast<const char*>(&v), 2); };
  auto put32 = [&](std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); };
  put16(Dataset::kFormatVersion);
  put32(static_cast<std::uint32_t>(ds.count()));
  put16(static_cast<std::uint16_t>(ds.height));
  put16(static_cast<std::uint16_t>(ds.width));
  put16(static_cast<std::uint16_t>(ds.channels));
  for (int i = 0; i < ds.count(); ++i) {
    put16(ds.class_ids[static_cast<std::size_t>(i)]);
    out.push_back(static_cast<char>(ds.domain_ids[static_cast<std::size_t>(i)]));
    const std::uint8_t* src = ds.pixels.data() + static_cast<std::size_t>(i) * ds.image_bytes();
    out.append(reinterpret_cast<const char*>(src), ds.image_bytes());
  }
  atomic_write_file(path, out);
}

Dataset load_dataset(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 16) throw TruncatedFileError("dataset: file too short: " + path);
  if (std::memcmp(bytes.data(), "MOCD", 4) != 0) {
    throw Error("dataset: bad magic in " + path + " (expected MOCD)");
  }
  auto u16 = [&](std::size_t off) {
    std::uint16_t v;
    std::memcpy(&v, bytes.data() + off, 2);
    return v;
  };
  std::uint16_t version = u16(4);
  if (version != Dataset::kFormatVersion) {
    throw VersionSkewError("dataset: unsupported format version " + std::to_string(version));
  }
  std::uint32_t count;
  std::memcpy(&count, bytes.data() + 6, 4);
  Dataset ds;
  ds.height = u16(10);
  ds.width = u16(12);
  ds.channels = u16(14);
  const std::size_t record = 3 + ds.image_bytes();
  if (bytes.size() != 16 + count * record) {
    throw TruncatedFileError("dataset: file length " + std::to_string(bytes.size()) +
                             " != expected " + std::to_string(16 + count * record));
  }
  std::size_t off = 16;
  for (std::uint32_t i = 0; i < count; ++i) {
    ds.class_ids.push_back(u16(off));
    ds.domain_ids.push_back(static_cast<std::uint8_t>(bytes[off + 2]));
    const auto* px = reinterpret_cast<const std::uint8_t*>(bytes.data() + off + 3);
    ds.pixels.insert(ds.pixels.end(), px, px + ds.image_bytes());
    off += record;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Generators. Class latents are fixed functions of the class index so a
// domain regenerates identically whether it is produced alone or as part of
// a larger corpus (per-class substreams).

namespace {

// Separable Gaussian blur, reflect padding.
void blur(std::vector<double>& img, int size, double sigma) {
  int radius = std::max(1, static_cast<int>(std::ceil(2.5 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (double& k : kernel) k /= sum;
  auto reflect = [&](int i) { return i < 0 ? -i - 1 : (i >= size ? 2 * size - i - 1 : i); };
  std::vector<double> tmp(img.size());
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] * img[static_cast<std::size_t>(y) * size + reflect(x + i)];
      tmp[static_cast<std::size_t>(y) * size + x] = acc;
    }
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(reflect(y + i)) * size + x];
      img[static_cast<std::size_t>(y) * size + x] = acc;
    }
}

void normalize_to_unit(std::vector<double>& img) {
  auto [mn, mx] = std::minmax_element(img.begin(), img.end());
  double lo = *mn, hi = *mx;
  double span = hi - lo < 1e-9 ? 1e-9 : hi - lo;
  for (double& v : img) v = (v - lo) / span;
}

// Smooth cloudy images built from Gaussian bumps over correlated noise.
// Classes vary blob count and radius.
std::vector<double> gen_blob_image(int size, int cls, Rng& rng) {
  const int count = 2 + 2 * (cls % 4);
  const double radius = cls < 4 ? 0.07 * size : 0.14 * size;
  std::vector<double> img(static_cast<std::size_t>(size) * size, 0.0);
  for (int b = 0; b < count; ++b) {
    double cy = rng.uniform(0.125 * size, 0.875 * size);
    double cx = rng.uniform(0.125 * size, 0.875 * size);
    double amp = rng.uniform(0.6, 1.0) * (rng.uniform() < 0.5 ? 1.0 : -1.0);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        img[static_cast<std::size_t>(y) * size + x] += amp * std::exp(-d2 / (2 * radius * radius));
      }
  }
  std::vector<double> noise(img.size());
  for (double& v : noise) v = rng.normal();
  blur(noise, size, 2.0);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] += 1.4 * noise[i];
  normalize_to_unit(img);
  return img;
}

// Oriented sine gratings; classes vary orientation and frequency band.
std::vector<double> gen_grating_image(int size, int cls, Rng& rng) {
  const double theta = (cls % 4) * M_PI / 4.0;
  const double base_freq = cls < 4 ? 3.0 : 6.0;
  const double freq = base_freq * rng.uniform(0.92, 1.08);
  const double phase = rng.uniform(0.0, 2.0 * M_PI);
  const double ct = std::cos(theta), st = std::sin(theta);
  std::vector<double> img(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double u = (x * ct + y * st) / size;
      img[static_cast<std::size_t>(y) * size + x] =
          std::sin(2.0 * M_PI * freq * u + phase) + 0.25 * rng.normal();
    }
  normalize_to_unit(img);
  return img;
}

}  // namespace

double domain_separability_probe(const Dataset& ds, std::uint64_t seed) {
  const int n = ds.count();
  if (n < 4) throw Error("separability probe: corpus too small");
  const int domains = 1 + *std::max_element(ds.domain_ids.begin(), ds.domain_ids.end());
  const int kFeat = 5;

  // Per-image pixel statistics: mean, std, |dx|, |dy|, lag-1 autocorrelation.
  std::vector<std::vector<double>> feats(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Tensor img = ds.image(i);
    const int h = ds.height, w = ds.width;
    double mean = 0.0;
    for (double v : img.data) mean += v;
    mean /= static_cast<double>(img.numel());
    double var = 0.0, dx = 0.0, dy = 0.0, lag = 0.0, lagn = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = img.data[static_cast<std::size_t>(y) * w + x];
        var += (v - mean) * (v - mean);
        if (x + 1 < w) {
          double r = img.data[static_cast<std::size_t>(y) * w + x + 1];
          dx += std::abs(r - v);
          lag += (v - mean) * (r - mean);
          lagn += 1.0;
        }
        if (y + 1 < h) dy += std::abs(img.data[static_cast<std::size_t>(y + 1) * w + x] - v);
      }
    var /= static_cast<double>(img.numel());
    feats[static_cast<std::size_t>(i)] = {mean, std::sqrt(var), dx / (h * (w - 1.0)),
                                          dy / ((h - 1.0) * w),
                                          lag / (lagn * (var + 1e-9))};
  }

  // Standardize features.
  for (int f = 0; f < kFeat; ++f) {
    double m = 0.0, s = 0.0;
    for (int i = 0; i < n; ++i) m += feats[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)];
    m /= n;
    for (int i = 0; i < n; ++i) {
      double d = feats[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)] - m;
      s += d * d;
    }
    s = std::sqrt(s / n) + 1e-9;
    for (int i = 0; i < n; ++i)
      feats[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)] =
          (feats[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)] - m) / s;
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(seed).fork("separability-probe");
  rng.shuffle(order);
  const int train_n = (n * 4) / 5;

  // Softmax regression, plain gradient descent.
  std::vector<double> w(static_cast<std::size_t>(domains) * (kFeat + 1), 0.0);
  for (int iter = 0; iter < 300; ++iter) {
    std::vector<double> grad(w.size(), 0.0);
    for (int t = 0; t < train_n; ++t) {
      int i = order[static_cast<std::size_t>(t)];
      std::vector<double> logits(static_cast<std::size_t>(domains), 0.0);
      for (int d = 0; d < domains; ++d) {
        double s = w[static_cast<std::size_t>(d) * (kFeat + 1) + kFeat];
        for (int f = 0; f < kFeat; ++f)
          s += w[static_cast<std::size_t>(d) * (kFeat + 1) + f] *
               feats[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)];
        logits[static_cast<std::size_t>(d)] = s;
      }
      double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double& l : logits) {
        l = std::exp(l - mx);
        z += l;
      }
      for (int d = 0; d < domains; ++d) {
        double p = logits[static_cast<std::size_t>(d)] / z;
        double err = p - (ds.domain_ids[static_cast<std::size_t>(i)] == d ? 1.0 : 0.0);
        for (int f = 0; f < kFeat; ++f)
          grad[static_cast<std::size_t>(d) * (kFeat + 1) + f] +=
              err * feats[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)];
        grad[static_cast<std::size_t>(d) * (kFeat + 1) + kFeat] += err;
      }
    }
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= 0.5 / train_n * grad[j];
  }

  int correct = 0;
  for (int t = train_n; t < n; ++t) {
    int i = order[static_cast<std::size_t>(t)];
    int best = 0;
    double best_s = -1e300;
    for (int d = 0; d < domains; ++d) {
      double s = w[static_cast<std::size_t>(d) * (kFeat + 1) + kFeat];
      for (int f = 0; f < kFeat; ++f)
        s += w[static_cast<std::size_t>(d) * (kFeat + 1) + f] *
             feats[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)];
      if (s > best_s) {
        best_s = s;
        best = d;
      }
    }
    if (best == ds.domain_ids[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / (n - train_n);
}

Dataset gen_synthetic(const CorpusConfig& config, GenReport* report) {
  if (config.domains.size() < 2) {
    throw Error("gen_synthetic: need at least 2 domains (disjoint class-id ranges)");
  }
  if (config.image_size <= 0 || config.images_per_class <= 0) {
    throw Error("gen_synthetic: image size and images per class must be positive");
  }
  Dataset ds;
  ds.height = config.image_size;
  ds.width = config.image_size;
  ds.channels = 1;

  Rng base(config.seed);
  int class_base = 0;
  for (std::size_t d = 0; d < config.domains.size(); ++d) {
    const DomainSpec& spec = config.domains[d];
    if (spec.classes <= 0) throw Error("gen_synthetic: domain class count must be positive");
    for (int cls = 0; cls < spec.classes; ++cls) {
      // Substream per (family, class): a domain regenerates identically
      // whether generated alone or inside a larger corpus.
      Rng rng = base.fork(spec.family + "/class" + std::to_string(cls));
      for (int i = 0; i < config.images_per_class; ++i) {
        std::vector<double> img;
        if (spec.family == "textured_blobs") {
          img = gen_blob_image(config.image_size, cls, rng);
        } else if (spec.family == "oriented_gratings") {
          img = gen_grating_image(config.image_size, cls, rng);
        } else {
          throw Error("gen_synthetic: unknown generator family \"" + spec.family + "\"");
        }
        ds.class_ids.push_back(static_cast<std::uint16_t>(class_base + cls));
        ds.domain_ids.push_back(static_cast<std::uint8_t>(d));
        for (double v : img) {
          ds.pixels.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
        }
      }
    }
    class_base += spec.classes;
  }

  double acc = domain_separability_probe(ds, config.seed);
  if (report != nullptr) report->domain_probe_accuracy = acc;
  if (acc < config.separability_threshold) {
    throw Error("gen_synthetic: domain separability self-test failed: probe accuracy " +
                std::to_string(acc) + " < " + std::to_string(config.separability_threshold));
  }
  return ds;
}

}  // namespace moce::io
