#include "kfac2l/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "kfac2l/rng.hpp"

namespace kfac2l {

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t at) {
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
         (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

void check_header(const std::vector<std::uint8_t>& bytes, std::size_t header, std::uint32_t magic,
                  const char* what) {
  if (bytes.size() < 4) throw Error(ErrorCode::TruncatedFile, std::string(what) + ": missing magic");
  if (read_be32(bytes, 0) != magic) throw Error(ErrorCode::BadMagic, std::string(what) + ": bad magic");
  if (bytes.size() < header) throw Error(ErrorCode::TruncatedFile, std::string(what) + ": short header");
}

Matrix subset(const Matrix& m, Index n) { return n > 0 && n < m.cols() ? Matrix(m.leftCols(n)) : m; }

}  // namespace

IdxImages parse_idx_images(const std::vector<std::uint8_t>& bytes) {
  check_header(bytes, 16, 0x00000803u, "idx images");
  const std::size_t n = read_be32(bytes, 4);
  const std::size_t rows = read_be32(bytes, 8);
  const std::size_t cols = read_be32(bytes, 12);
  const std::size_t pixels = rows * cols;
  if (bytes.size() < 16 + n * pixels) throw Error(ErrorCode::TruncatedFile, "idx images: short pixel data");
  if (bytes.size() > 16 + n * pixels) throw Error(ErrorCode::DimMismatch, "idx images: trailing bytes");
  IdxImages out{static_cast<Index>(rows), static_cast<Index>(cols),
                Matrix(static_cast<Index>(pixels), static_cast<Index>(n))};
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t k = 0; k < pixels; ++k)
      out.pixels(static_cast<Index>(k), static_cast<Index>(s)) = bytes[16 + s * pixels + k] / 255.0;
  return out;
}

std::vector<int> parse_idx_labels(const std::vector<std::uint8_t>& bytes) {
  check_header(bytes, 8, 0x00000801u, "idx labels");
  const std::size_t n = read_be32(bytes, 4);
  if (bytes.size() < 8 + n) throw Error(ErrorCode::TruncatedFile, "idx labels: short label data");
  if (bytes.size() > 8 + n) throw Error(ErrorCode::DimMismatch, "idx labels: trailing bytes");
  return {bytes.begin() + 8, bytes.end()};
}

CsvTable parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::TruncatedFile, "csv: missing header");
  const auto width = static_cast<Index>(std::count(line.begin(), line.end(), ',') + 1);
  if (width < 2) throw Error(ErrorCode::DimMismatch, "csv: need at least one feature and a label");

  std::vector<std::vector<double>> rows;
  CsvTable table;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> values;
    std::stringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw Error(ErrorCode::BadConfig, "csv: non-numeric cell '" + cell + "'");
      }
    }
    if (static_cast<Index>(values.size()) != width)
      throw Error(ErrorCode::DimMismatch, "csv: row has " + std::to_string(values.size()) +
                                              " cells, header has " + std::to_string(width));
    const double label = values.back();
    if (label != std::floor(label) || label < 0)
      throw Error(ErrorCode::BadConfig, "csv: label must be a nonnegative integer");
    table.labels.push_back(static_cast<int>(label));
    values.pop_back();
    rows.push_back(std::move(values));
  }
  table.features.resize(width - 1, static_cast<Index>(rows.size()));
  for (std::size_t s = 0; s < rows.size(); ++s)
    for (Index k = 0; k < width - 1; ++k) table.features(k, static_cast<Index>(s)) = rows[s][k];
  return table;
}

Matrix one_hot(const std::vector<int>& labels, Index classes) {
  if (classes == 0 && !labels.empty()) classes = *std::max_element(labels.begin(), labels.end()) + 1;
  Matrix y = Matrix::Zero(classes, static_cast<Index>(labels.size()));
  for (std::size_t s = 0; s < labels.size(); ++s) {
    if (labels[s] < 0 || labels[s] >= classes)
      throw Error(ErrorCode::DimMismatch, "label " + std::to_string(labels[s]) + " outside " +
                                              std::to_string(classes) + " classes");
    y(labels[s], static_cast<Index>(s)) = 1.0;
  }
  return y;
}

Dataset synthetic_regression(Index n, Index dim, Index out_dim, Index classes, std::uint64_t seed) {
  require(n > 0 && dim > 0 && out_dim > 0, ErrorCode::BadConfig, "synthetic-regression: empty shape");
  require(classes == 0 || classes == out_dim, ErrorCode::DimMismatch,
          "synthetic-regression: classes must equal the network output size");
  auto engine = make_engine(seed, Stream::Data);
  std::normal_distribution<double> normal;
  auto draw = [&](Index r, Index c, double scale) {
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) m(i, j) = scale * normal(engine);
    return m;
  };
  Dataset d;
  const Matrix w = draw(out_dim, dim, 1.0 / std::sqrt(static_cast<double>(dim)));
  d.inputs = draw(dim, n, 1.0);
  const Matrix clean = w * d.inputs;
  if (classes > 0) {
    d.targets = Matrix::Zero(out_dim, n);
    for (Index s = 0; s < n; ++s) {
      Index k = 0;
      clean.col(s).maxCoeff(&k);
      d.targets(k, s) = 1.0;
    }
  } else {
    d.targets = clean + draw(out_dim, n, 0.1);
  }
  return d;
}

Dataset synthetic_autoencoder(Index n, Index dim, std::uint64_t seed) {
  require(n > 0 && dim > 0, ErrorCode::BadConfig, "synthetic-autoencoder: empty shape");
  constexpr Index latent = 4;
  auto engine = make_engine(seed, Stream::Data);
  std::normal_distribution<double> normal;
  Matrix m(dim, latent), z(latent, n);
  for (Index j = 0; j < latent; ++j)
    for (Index i = 0; i < dim; ++i) m(i, j) = normal(engine);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < latent; ++i) z(i, j) = normal(engine);
  Dataset d;
  d.inputs = (1.0 + (-(m * z).array()).exp()).inverse().matrix();
  d.targets = d.inputs;
  return d;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Dataset load_dataset(const ExperimentConfig& c, Index out_dim) {
  const Index input_dim = c.has_input_shape ? c.input_shape.size() : c.dataset_dim;
  if (c.dataset == "synthetic-regression")
    return synthetic_regression(c.dataset_size, input_dim, out_dim, c.classes, c.seed);
  if (c.dataset == "synthetic-autoencoder") return synthetic_autoencoder(c.dataset_size, input_dim, c.seed);

  Dataset d;
  std::vector<int> labels;
  if (c.dataset == "idx") {
    IdxImages images = parse_idx_images(read_file(c.dataset_path));
    d.inputs = std::move(images.pixels);
    if (!c.autoencoder) {
      if (c.labels_path.empty()) throw Error(ErrorCode::BadConfig, "idx classification needs labels_path");
      labels = parse_idx_labels(read_file(c.labels_path));
      if (static_cast<Index>(labels.size()) != d.inputs.cols())
        throw Error(ErrorCode::DimMismatch, "idx: image and label counts differ");
    }
  } else if (c.dataset == "csv") {
    const auto bytes = read_file(c.dataset_path);
    CsvTable table = parse_csv(std::string(bytes.begin(), bytes.end()));
    d.inputs = std::move(table.features);
    labels = std::move(table.labels);
  } else {
    throw Error(ErrorCode::BadConfig, "unknown dataset '" + c.dataset + "'");
  }
  d.inputs = subset(d.inputs, c.dataset_size);
  if (c.autoencoder) {
    d.targets = d.inputs;
  } else {
    labels.resize(static_cast<std::size_t>(d.inputs.cols()));
    d.targets = one_hot(labels, c.classes > 0 ? c.classes : out_dim);
  }
  return d;
}

}  // namespace kfac2l
