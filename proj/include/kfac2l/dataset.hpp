#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kfac2l/config.hpp"

namespace kfac2l {

/** Raw IDX content. Images are row-major pixels scaled to [0, 1], one
 *  column per sample. */
struct IdxImages {
  Index rows = 0;
  Index cols = 0;
  Matrix pixels;
};

/// Magic 0x00000803, big-endian n, rows, cols, then n*rows*cols bytes.
IdxImages parse_idx_images(const std::vector<std::uint8_t>& bytes);
/// Magic 0x00000801, big-endian n, then n label bytes.
std::vector<int> parse_idx_labels(const std::vector<std::uint8_t>& bytes);

/** Header row then comma-separated numeric rows; the last column is an
 *  integer label. Returns features (columns = samples) and labels. */
struct CsvTable {
  Matrix features;
  std::vector<int> labels;
};
CsvTable parse_csv(const std::string& text);

/// classes = 0 uses max label + 1.
Matrix one_hot(const std::vector<int>& labels, Index classes);

/** x ~ N(0, I_d). With classes = 0, y = W x + 0.1 e with W ~ N(0, 1/d) of
 *  shape out_dim x d and e ~ N(0, I). With classes > 0, y is the one-hot
 *  argmax of W x (out_dim must equal classes). Drawn from the Data stream. */
Dataset synthetic_regression(Index n, Index dim, Index out_dim, Index classes, std::uint64_t seed);

/// x = sigmoid(M z), z ~ N(0, I_4), M ~ N(0, 1); targets = inputs.
Dataset synthetic_autoencoder(Index n, Index dim, std::uint64_t seed);

/** Loads or generates the dataset named by the config. out_dim is the
 *  network output size, used by synthetic-regression. */
Dataset load_dataset(const ExperimentConfig& config, Index out_dim);

std::vector<std::uint8_t> read_file(const std::string& path);

}  // namespace kfac2l
