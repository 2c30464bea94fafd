#include "andhra/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "andhra/error.hpp"

namespace andhra {
namespace {

std::vector<std::uint8_t> read_all(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError("cannot open " + file.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(size);
  if (size && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size)))
    throw FormatError("short read on " + file.string());
  return bytes;
}

Dataset parse_records(const std::filesystem::path& file, Split split, std::size_t label_bytes,
                      std::size_t num_classes) {
  const std::size_t record = label_bytes + kImageBytes;
  const auto bytes = read_all(file);
  if (bytes.empty() || bytes.size() % record != 0)
    throw FormatError(file.string() + ": length " + std::to_string(bytes.size()) +
                      " is not a positive multiple of the " + std::to_string(record) + "-byte record");
  const std::size_t n = bytes.size() / record;
  Dataset d;
  d.num_classes = num_classes;
  d.split = split;
  d.labels.resize(n);
  if (label_bytes == 2) d.coarse_labels.resize(n);
  d.images.resize(n * kImageBytes);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * record;
    const int label = rec[label_bytes - 1];
    if (static_cast<std::size_t>(label) >= num_classes)
      throw FormatError(file.string() + ": label " + std::to_string(label) + " out of range at offset " +
                        std::to_string(i * record + label_bytes - 1));
    d.labels[i] = label;
    if (label_bytes == 2) {
      if (rec[0] >= 20)
        throw FormatError(file.string() + ": coarse label " + std::to_string(rec[0]) +
                          " out of range at offset " + std::to_string(i * record));
      d.coarse_labels[i] = rec[0];
    }
    std::copy_n(rec + label_bytes, kImageBytes, d.images.data() + i * kImageBytes);
  }
  return d;
}

void append(Dataset& into, const Dataset& more) {
  into.images.insert(into.images.end(), more.images.begin(), more.images.end());
  into.labels.insert(into.labels.end(), more.labels.begin(), more.labels.end());
  into.coarse_labels.insert(into.coarse_labels.end(), more.coarse_labels.begin(), more.coarse_labels.end());
}

void write_records(const Dataset& data, const std::filesystem::path& file, bool with_coarse) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw FormatError("cannot write " + file.string());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (with_coarse) {
      const int coarse = data.coarse_labels.empty() ? 0 : data.coarse_labels[i];
      out.put(static_cast<char>(coarse));
    }
    out.put(static_cast<char>(data.labels[i]));
    const auto img = data.image(i);
    out.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
  }
  if (!out) throw FormatError("write failed on " + file.string());
}

}  // namespace

Dataset Dataset::head(std::size_t n) const {
  n = std::min(n, size());
  Dataset d;
  d.num_classes = num_classes;
  d.split = split;
  d.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
  if (!coarse_labels.empty())
    d.coarse_labels.assign(coarse_labels.begin(), coarse_labels.begin() + static_cast<std::ptrdiff_t>(n));
  d.images.assign(images.begin(), images.begin() + static_cast<std::ptrdiff_t>(n * kImageBytes));
  return d;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

Dataset read_cifar10_file(const std::filesystem::path& file, Split split) {
  return parse_records(file, split, 1, 10);
}

Dataset read_cifar100_file(const std::filesystem::path& file, Split split) {
  return parse_records(file, split, 2, 100);
}

void write_cifar10_file(const Dataset& data, const std::filesystem::path& file) {
  write_records(data, file, false);
}

void write_cifar100_file(const Dataset& data, const std::filesystem::path& file) {
  write_records(data, file, true);
}

DatasetPair load_cifar10(const std::filesystem::path& dir) {
  DatasetPair pair;
  pair.train.num_classes = 10;
  pair.train.split = Split::Train;
  for (int i = 1; i <= 5; ++i)
    append(pair.train, read_cifar10_file(dir / ("data_batch_" + std::to_string(i) + ".bin"), Split::Train));
  pair.test = read_cifar10_file(dir / "test_batch.bin", Split::Test);
  return pair;
}

DatasetPair load_cifar100(const std::filesystem::path& dir) {
  return {read_cifar100_file(dir / "train.bin", Split::Train),
          read_cifar100_file(dir / "test.bin", Split::Test)};
}

CropFlip draw_crop_flip(Rng& rng) {
  CropFlip p;
  p.offset_y = static_cast<std::size_t>(rng.below(2 * kCropPadding + 1));
  p.offset_x = static_cast<std::size_t>(rng.below(2 * kCropPadding + 1));
  p.flip = rng.bernoulli_half();
  return p;
}

void apply_crop_flip(std::span<const std::uint8_t> image, const CropFlip& params,
                     std::span<std::uint8_t> out) {
  if (image.size() != kImageBytes || out.size() != kImageBytes)
    throw DimensionError("crop/flip expects 3x32x32 images");
  if (params.offset_y > 2 * kCropPadding || params.offset_x > 2 * kCropPadding)
    throw ContractViolation("crop offset outside the padded image");
  const long side = static_cast<long>(kImageSide);
  for (std::size_t c = 0; c < kImageChannels; ++c) {
    const std::uint8_t* src = image.data() + c * kImagePlane;
    std::uint8_t* dst = out.data() + c * kImagePlane;
    for (long y = 0; y < side; ++y) {
      const long sy = y + static_cast<long>(params.offset_y) - static_cast<long>(kCropPadding);
      for (long x = 0; x < side; ++x) {
        const long ox = params.flip ? side - 1 - x : x;
        const long sx = ox + static_cast<long>(params.offset_x) - static_cast<long>(kCropPadding);
        const bool inside = sy >= 0 && sy < side && sx >= 0 && sx < side;
        dst[y * side + x] = inside ? src[sy * side + sx] : 0;
      }
    }
  }
}

void augment_train(std::span<const std::uint8_t> image, Rng& rng, std::span<std::uint8_t> out) {
  apply_crop_flip(image, draw_crop_flip(rng), out);
}

Normalization compute_normalization(const Dataset& data) {
  if (data.size() == 0) throw ContractViolation("normalization statistics of an empty dataset");
  Normalization norm;
  const double count = static_cast<double>(data.size() * kImagePlane);
  for (std::size_t c = 0; c < kImageChannels; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::uint8_t* p = data.images.data() + i * kImageBytes + c * kImagePlane;
      for (std::size_t j = 0; j < kImagePlane; ++j) s += p[j] / 255.0;
    }
    const double mean = s / count;
    double ss = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::uint8_t* p = data.images.data() + i * kImageBytes + c * kImagePlane;
      for (std::size_t j = 0; j < kImagePlane; ++j) {
        const double d = p[j] / 255.0 - mean;
        ss += d * d;
      }
    }
    norm.mean[c] = mean;
    norm.stddev[c] = std::sqrt(ss / count);
    if (!(norm.stddev[c] > 0.0)) norm.stddev[c] = 1.0;  // constant channel
  }
  return norm;
}

void normalize(std::span<const std::uint8_t> image, const Normalization& norm, std::span<double> out) {
  if (image.size() != kImageBytes || out.size() != kImageBytes)
    throw DimensionError("normalize expects 3x32x32 images");
  for (std::size_t c = 0; c < kImageChannels; ++c) {
    if (!(norm.stddev[c] > 0.0)) throw ContractViolation("normalize: std must be positive");
    const double inv = 1.0 / norm.stddev[c];
    for (std::size_t j = 0; j < kImagePlane; ++j) {
      const std::size_t k = c * kImagePlane + j;
      out[k] = (image[k] / 255.0 - norm.mean[c]) * inv;
    }
  }
}

namespace {

std::array<double, 3> class_colour(std::size_t cls, std::size_t num_classes) {
  // Evenly spaced hues at full saturation; value alternates so neighbouring
  // hues of large class counts still differ in brightness.
  const double hue = 6.0 * static_cast<double>(cls) / static_cast<double>(num_classes);
  const double value = (cls % 2 == 0) ? 1.0 : 0.7;
  const int sector = static_cast<int>(hue) % 6;
  const double f = hue - std::floor(hue);
  const double p = 0.0, q = value * (1.0 - f), t = value * f;
  switch (sector) {
    case 0: return {value, t, p};
    case 1: return {q, value, p};
    case 2: return {p, value, t};
    case 3: return {p, q, value};
    case 4: return {t, p, value};
    default: return {value, p, q};
  }
}

std::uint8_t to_pixel(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

Dataset synthetic_dataset(std::size_t n, std::size_t num_classes, Rng& rng, Split split) {
  if (num_classes == 0 || num_classes > 256) throw ContractViolation("synthetic_dataset: bad class count");
  if (n < num_classes) throw ContractViolation("synthetic_dataset: need n >= num_classes");
  Dataset d;
  d.num_classes = num_classes;
  d.split = split;
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.labels[i] = static_cast<int>(i % num_classes);
  const auto order = rng.permutation(n);
  std::vector<int> shuffled(n);
  for (std::size_t i = 0; i < n; ++i) shuffled[i] = d.labels[order[i]];
  d.labels = std::move(shuffled);

  d.images.resize(n * kImageBytes);
  for (std::size_t i = 0; i < n; ++i) {
    const auto cls = static_cast<std::size_t>(d.labels[i]);
    const auto colour = class_colour(cls, num_classes);
    const double cy = 8.0 + 16.0 * rng.uniform();
    const double cx = 8.0 + 16.0 * rng.uniform();
    const double sigma = 4.0 + 2.0 * static_cast<double>(cls % 3) + rng.uniform();
    const double background = 80.0 + 40.0 * rng.uniform();
    std::uint8_t* img = d.images.data() + i * kImageBytes;
    for (std::size_t y = 0; y < kImageSide; ++y)
      for (std::size_t x = 0; x < kImageSide; ++x) {
        const double dy = static_cast<double>(y) - cy;
        const double dx = static_cast<double>(x) - cx;
        const double w = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
        for (std::size_t c = 0; c < kImageChannels; ++c) {
          const double v = (1.0 - w) * background + w * 255.0 * colour[c] + 12.0 * rng.normal();
          img[c * kImagePlane + y * kImageSide + x] = to_pixel(v);
        }
      }
  }
  return d;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices, const Normalization& norm,
                 Rng* augment) {
  const std::size_t B = indices.size();
  if (B == 0) throw ContractViolation("make_batch: empty index list");
  std::vector<double> values(B * kImageBytes);
  std::vector<int> labels(B);
  std::array<std::uint8_t, kImageBytes> scratch{};
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t idx = indices[b];
    if (idx >= data.size()) throw IndexError("make_batch: record " + std::to_string(idx) + " out of range");
    std::span<const std::uint8_t> img = data.image(idx);
    if (augment) {
      augment_train(img, *augment, scratch);
      img = scratch;
    }
    normalize(img, norm, std::span<double>(values.data() + b * kImageBytes, kImageBytes));
    labels[b] = data.labels[idx];
  }
  return {Tensor::from({B, kImageChannels, kImageSide, kImageSide}, std::move(values)), std::move(labels)};
}

}  // namespace andhra
