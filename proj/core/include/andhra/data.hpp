#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "andhra/rng.hpp"
#include "andhra/tensor.hpp"

namespace andhra {

inline constexpr std::size_t kImageChannels = 3;
inline constexpr std::size_t kImageSide = 32;
inline constexpr std::size_t kImagePlane = kImageSide * kImageSide;
inline constexpr std::size_t kImageBytes = kImageChannels * kImagePlane;  // 3072
inline constexpr std::size_t kCifar10Record = 1 + kImageBytes;             // 3073
inline constexpr std::size_t kCifar100Record = 2 + kImageBytes;            // 3074
inline constexpr std::size_t kCropPadding = 4;

enum class Split { Train, Test };

// Images are stored channel-planar (1024 R, 1024 G, 1024 B), row-major, as
// in the CIFAR binaries.
struct Dataset {
  std::vector<std::uint8_t> images;
  std::vector<int> labels;
  std::vector<int> coarse_labels;  // CIFAR-100 only
  std::size_t num_classes = 0;
  Split split = Split::Train;

  std::size_t size() const { return labels.size(); }
  std::span<const std::uint8_t> image(std::size_t i) const {
    return {images.data() + i * kImageBytes, kImageBytes};
  }
  // First n records (or all when n exceeds the size).
  Dataset head(std::size_t n) const;
  std::vector<std::size_t> class_counts() const;
};

struct DatasetPair {
  Dataset train;
  Dataset test;
};

Dataset read_cifar10_file(const std::filesystem::path& file, Split split);
Dataset read_cifar100_file(const std::filesystem::path& file, Split split);
void write_cifar10_file(const Dataset& data, const std::filesystem::path& file);
void write_cifar100_file(const Dataset& data, const std::filesystem::path& file);

// data_batch_1..5.bin + test_batch.bin
DatasetPair load_cifar10(const std::filesystem::path& dir);
// train.bin + test.bin, fine labels
DatasetPair load_cifar100(const std::filesystem::path& dir);

// Window offset into the 40x40 zero-padded image plus the flip decision.
struct CropFlip {
  std::size_t offset_y = kCropPadding;
  std::size_t offset_x = kCropPadding;
  bool flip = false;
};

CropFlip draw_crop_flip(Rng& rng);
void apply_crop_flip(std::span<const std::uint8_t> image, const CropFlip& params,
                     std::span<std::uint8_t> out);
// Random 32x32 crop of the 4-pixel zero-padded image, then a horizontal flip
// with probability 1/2.
void augment_train(std::span<const std::uint8_t> image, Rng& rng, std::span<std::uint8_t> out);

struct Normalization {
  std::array<double, kImageChannels> mean{0.0, 0.0, 0.0};
  std::array<double, kImageChannels> stddev{1.0, 1.0, 1.0};
};

// Per-channel mean and (population) standard deviation of pixel/255.
Normalization compute_normalization(const Dataset& data);
// (pixel/255 - mean_c) / std_c
void normalize(std::span<const std::uint8_t> image, const Normalization& norm, std::span<double> out);

// Class-conditional coloured Gaussian blobs on a noisy background. Labels
// are balanced (counts differ by at most one) and the recipe depends only on
// the generator state.
Dataset synthetic_dataset(std::size_t n, std::size_t num_classes, Rng& rng, Split split = Split::Train);

struct Batch {
  Tensor images;  // [B,3,32,32]
  std::vector<int> labels;
};

// Normalised batch from the given record indices; `augment` (nullable)
// supplies the crop/flip randomness for training batches.
Batch make_batch(const Dataset& data, std::span<const std::size_t> indices,
                 const Normalization& norm, Rng* augment);

}  // namespace andhra
