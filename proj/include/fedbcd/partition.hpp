#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedbcd/model.hpp"
#include "fedbcd/rng.hpp"

namespace fedbcd {

struct PartitionSpec {
  int diversity = 3;           // distinct class labels per device
  int samples_per_device = 600;
};

/// Classes a device draws from: round-robin blocks of `diversity` labels.
inline std::vector<int> device_classes(int device, int diversity, int classes) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(diversity));
  for (int j = 0; j < diversity; ++j)
    out.push_back((device * diversity + j) % classes);
  return out;
}

namespace partition_detail {

inline double to_dataset_label(LossKind kind, int class_index) {
  if (kind == LossKind::logistic) return class_index == 0 ? -1.0 : 1.0;
  return static_cast<double>(class_index);
}

/// Normalizes a raw pool label to a class index in [0, classes).
inline int to_class_index(LossKind kind, double label, int classes,
                          const char* where) {
  if (kind == LossKind::logistic) {
    if (label == -1.0 || label == 0.0) return 0;
    if (label == 1.0) return 1;
    throw std::invalid_argument(std::string(where) +
                                ": logistic labels must be -1/+1 or 0/1");
  }
  if (label != std::floor(label) || label < 0 || label >= classes)
    throw std::invalid_argument(std::string(where) +
                                ": label outside [0, classes)");
  return static_cast<int>(label);
}

}  // namespace partition_detail

/// Label-restricted partition: each device receives samples_per_device points
/// drawn from exactly `diversity` classes assigned round-robin. Devices
/// consume disjoint slices of the pool.
inline std::vector<LocalDataset> partition_by_diversity(
    const std::vector<Sample>& pool, LossKind kind, int classes,
    int device_count, const PartitionSpec& spec, RngStream& rng) {
  if (kind == LossKind::least_squares)
    throw std::invalid_argument("partition_by_diversity: needs class labels");
  if (spec.diversity < 1 || spec.diversity > classes)
    throw std::invalid_argument(
        "partition_by_diversity: diversity must be in [1, classes]");
  if (device_count < 1 || spec.samples_per_device < 1)
    throw std::invalid_argument("partition_by_diversity: bad sizes");

  std::vector<std::vector<std::size_t>> by_class(
      static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    int c = partition_detail::to_class_index(kind, pool[i].label, classes,
                                             "partition_by_diversity");
    by_class[static_cast<std::size_t>(c)].push_back(i);
  }
  for (auto& idx : by_class) rng.shuffle(idx);
  std::vector<std::size_t> cursor(static_cast<std::size_t>(classes), 0);

  std::vector<LocalDataset> out;
  out.reserve(static_cast<std::size_t>(device_count));
  for (int dev = 0; dev < device_count; ++dev) {
    std::vector<int> cls = device_classes(dev, spec.diversity, classes);
    int quota = spec.samples_per_device / spec.diversity;
    int extra = spec.samples_per_device % spec.diversity;
    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(spec.samples_per_device));
    for (int j = 0; j < spec.diversity; ++j) {
      int want = quota + (j < extra ? 1 : 0);
      int c = cls[static_cast<std::size_t>(j)];
      auto& idx = by_class[static_cast<std::size_t>(c)];
      auto& cur = cursor[static_cast<std::size_t>(c)];
      if (cur + static_cast<std::size_t>(want) > idx.size())
        throw std::invalid_argument(
            "partition_by_diversity: class " + std::to_string(c) +
            " exhausted (need " + std::to_string(want) + ", have " +
            std::to_string(idx.size() - cur) + ")");
      for (int k = 0; k < want; ++k) {
        const Sample& src = pool[idx[cur++]];
        samples.push_back(Sample{
            src.features, partition_detail::to_dataset_label(kind, c)});
      }
    }
    out.emplace_back(kind, std::move(samples),
                     kind == LossKind::multinomial_logistic ? classes : 0);
  }
  return out;
}

/// Unrestricted partition for regression pools: shuffled disjoint slices.
inline std::vector<LocalDataset> partition_random(
    const std::vector<Sample>& pool, LossKind kind, int classes,
    int device_count, int samples_per_device, RngStream& rng) {
  if (static_cast<std::size_t>(device_count) *
          static_cast<std::size_t>(samples_per_device) >
      pool.size())
    throw std::invalid_argument("partition_random: pool too small");
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(idx);
  std::vector<LocalDataset> out;
  std::size_t cur = 0;
  for (int dev = 0; dev < device_count; ++dev) {
    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(samples_per_device));
    for (int k = 0; k < samples_per_device; ++k)
      samples.push_back(pool[idx[cur++]]);
    out.emplace_back(kind, std::move(samples),
                     kind == LossKind::multinomial_logistic ? classes : 0);
  }
  return out;
}

struct GaussianSpec {
  int classes = 4;
  int features = 2;
  double separation = 1.0;  // radius of the circle of class means
  double stddev = 0.8;
};

/// Balanced pool of Gaussian class clusters with means on a circle.
inline std::vector<Sample> make_gaussian_pool(const GaussianSpec& spec,
                                              int count, RngStream& rng) {
  if (spec.classes < 2 || spec.features < 1 || !(spec.stddev > 0))
    throw std::invalid_argument("make_gaussian_pool: bad spec");
  std::vector<Sample> pool;
  pool.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    int c = i % spec.classes;
    double angle = 2.0 * std::numbers::pi * c / spec.classes;
    std::vector<double> f(static_cast<std::size_t>(spec.features));
    for (std::size_t j = 0; j < f.size(); ++j) {
      double mean = 0.0;
      if (j == 0) mean = spec.separation * std::cos(angle);
      if (j == 1) mean = spec.separation * std::sin(angle);
      f[j] = mean + spec.stddev * rng.normal();
    }
    pool.push_back(Sample{std::move(f), static_cast<double>(c)});
  }
  return pool;
}

struct LinearSpec {
  int features = 10;
  double noise_stddev = 0.1;
};

/// Regression pool y = a . w + noise with a hidden coefficient vector drawn
/// inside the box.
inline std::vector<Sample> make_linear_pool(const LinearSpec& spec, int count,
                                            const BoxSet& coef_box,
                                            RngStream& rng) {
  if (spec.features < 1 || spec.noise_stddev < 0)
    throw std::invalid_argument("make_linear_pool: bad spec");
  std::vector<double> coef(static_cast<std::size_t>(spec.features));
  for (double& w : coef) w = rng.uniform(coef_box.lower, coef_box.upper);
  std::vector<Sample> pool;
  pool.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    std::vector<double> f(static_cast<std::size_t>(spec.features));
    double y = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) {
      f[j] = rng.normal();
      y += f[j] * coef[j];
    }
    y += spec.noise_stddev * rng.normal();
    pool.push_back(Sample{std::move(f), y});
  }
  return pool;
}

/// CSV ingestion. Expects a header f0,...,f{m-1},label and one row per
/// sample.
inline std::vector<Sample> load_csv_pool(const std::string& path,
                                         std::size_t* feature_dim_out = nullptr) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv_pool: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument("load_csv_pool: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) header.push_back(tok);
  }
  if (header.size() < 2 || header.back() != "label")
    throw std::invalid_argument("load_csv_pool: header must be f0..f{m-1},label");
  for (std::size_t j = 0; j + 1 < header.size(); ++j)
    if (header[j] != "f" + std::to_string(j))
      throw std::invalid_argument("load_csv_pool: bad header column '" +
                                  header[j] + "'");
  std::size_t m = header.size() - 1;

  std::vector<Sample> pool;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> vals;
    while (std::getline(ss, tok, ',')) {
      try {
        vals.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw std::invalid_argument("load_csv_pool: bad number at line " +
                                    std::to_string(line_no));
      }
    }
    if (vals.size() != m + 1)
      throw std::invalid_argument("load_csv_pool: wrong column count at line " +
                                  std::to_string(line_no));
    Sample s;
    s.features.assign(vals.begin(), vals.end() - 1);
    s.label = vals.back();
    pool.push_back(std::move(s));
  }
  if (pool.empty()) throw std::invalid_argument("load_csv_pool: no data rows");
  if (feature_dim_out) *feature_dim_out = m;
  return pool;
}

}  // namespace fedbcd
