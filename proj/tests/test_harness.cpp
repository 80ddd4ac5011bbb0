#include "support.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kfac2l/dataset.hpp"
#include "kfac2l/experiment.hpp"
#include "kfac2l/plot.hpp"

using namespace kfac2l;
using namespace testing;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("kfac2l-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(KFAC2L_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// Linear model with a step size large enough to overflow within 40 steps.
void make_diverging(ExperimentConfig& c) {
  c.methods = {Method::SGD};
  c.layers = {parse_layer_token("dense:2:identity")};
  c.learning_rate = 1e8;
  c.epochs = 10;
}

/// Small regression problem that trains in well under a second.
ExperimentConfig small_config(const std::string& out_dir) {
  ExperimentConfig c;
  c.name = "small";
  c.seed = 3;
  c.epochs = 3;
  c.batch_size = 16;
  c.dataset = "synthetic-regression";
  c.dataset_size = 64;
  c.dataset_dim = 5;
  c.layers = {parse_layer_token("dense:6:tanh"), parse_layer_token("dense:2:identity")};
  c.methods = {Method::KFAC, Method::NICO};
  c.learning_rate = 0.1;
  c.damping = 0.01;
  c.output_dir = out_dir;
  return c;
}

std::vector<std::uint8_t> idx_fixture() {
  // magic, n = 2, rows = 2, cols = 2, then 8 pixels
  return {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 51, 102, 255, 255, 0, 0, 0};
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::Io;
}

ExperimentConfig random_config(std::mt19937_64& e) {
  auto pick = [&](auto... xs) {
    const std::vector<std::common_type_t<decltype(xs)...>> v{xs...};
    return v[static_cast<std::size_t>(uniform(e, 0, static_cast<Index>(v.size()) - 1))];
  };
  ExperimentConfig c;
  c.name = pick(std::string("a"), std::string("run two"), std::string("x#y"), std::string("q=1,2"));
  c.seed = std::uniform_int_distribution<std::uint64_t>()(e);
  c.epochs = static_cast<int>(uniform(e, 0, 500));
  c.batch_size = uniform(e, 1, 512);
  c.loss = pick(LossKind::SquaredError, LossKind::CrossEntropy);
  c.dataset = pick(std::string("idx"), std::string("csv"), std::string("synthetic-regression"),
                   std::string("synthetic-autoencoder"));
  c.dataset_path = pick(std::string(), std::string("data/train images.idx"));
  c.labels_path = pick(std::string(), std::string("/tmp/labels"));
  c.dataset_size = uniform(e, 0, 10000);
  c.dataset_dim = uniform(e, 1, 100);
  c.classes = uniform(e, 0, 10);
  c.autoencoder = uniform(e, 0, 1);
  c.has_input_shape = uniform(e, 0, 1);
  if (c.has_input_shape) c.input_shape = {uniform(e, 1, 3), uniform(e, 1, 32), uniform(e, 1, 32)};
  c.layers.clear();
  for (Index k = uniform(e, 1, 5); k > 0; --k) {
    LayerToken t;
    t.kind = pick(LayerKind::Dense, LayerKind::Conv);
    t.out = uniform(e, 1, 64);
    t.activation = pick(Activation::Identity, Activation::Tanh, Activation::Relu, Activation::Sigmoid);
    if (t.kind == LayerKind::Conv) {
      t.kernel_height = uniform(e, 1, 5);
      t.kernel_width = uniform(e, 1, 5);
      t.stride = uniform(e, 1, 3);
      t.padding = uniform(e, 0, 2);
    }
    c.layers.push_back(t);
  }
  c.methods.clear();
  for (Index k = uniform(e, 1, 4); k > 0; --k)
    c.methods.push_back(pick(Method::SGD, Method::Adam, Method::KFAC, Method::NICO, Method::KRY_RESIDU,
                             Method::TAYLOR, Method::ExactNGD));
  std::uniform_real_distribution<double> u(-8, 4);
  c.learning_rate = std::pow(10.0, u(e));
  c.damping = std::pow(10.0, u(e)) / 3.0;
  c.weight_decay = pick(0.0, 1e-3, 0.1 / 7);
  c.taylor_order = static_cast<int>(uniform(e, 1, 4));
  c.patience = static_cast<int>(uniform(e, 1, 50));
  c.fisher = pick(FisherEstimate::Sampled, FisherEstimate::Expected);
  c.grid = uniform(e, 0, 1);
  c.grid_full = uniform(e, 0, 1);
  c.grid_lr.clear();
  for (Index k = uniform(e, 1, 4); k > 0; --k) c.grid_lr.push_back(std::pow(10.0, u(e)));
  c.grid_damping = {1.0 / 3.0};
  c.output_dir = pick(std::string("runs"), std::string("out/with space"));
  c.record_time = uniform(e, 0, 1);
  c.step_trace = uniform(e, 0, 1);
  return c;
}

}  // namespace

TEST_CASE("config round-trip over random configs") {
  auto e = engine(70);
  for (int k = 0; k < 200; ++k) {
    const ExperimentConfig c = random_config(e);
    const std::string text = serialize_config(c);
    const ExperimentConfig back = parse_config(text);
    CHECK(back == c);
    CHECK(serialize_config(back) == text);
  }
}

TEST_CASE("config parsing") {
  const ExperimentConfig c = parse_config(
      "# comment\n"
      "name = \"demo # not a comment\"\n"
      "seed = 5   # trailing\n"
      "layers = [conv:4:3x3:s1:p1:relu, dense:10:identity]\n"
      "input_shape = 1x8x8\n"
      "methods = kfac, kry_nico\n"
      "grid_lr = [1e-2, 0.5]\n");
  CHECK(c.name == "demo # not a comment");
  CHECK(c.seed == 5);
  CHECK(c.methods == std::vector<Method>{Method::KFAC, Method::KRY_NICO});
  CHECK(c.grid_lr == std::vector<double>{1e-2, 0.5});
  REQUIRE(c.layers.size() == 2);
  CHECK(c.layers[0].kind == LayerKind::Conv);
  CHECK(c.layers[0].kernel_height == 3);
  CHECK(c.layers[0].padding == 1);

  const auto specs = build_layers(c, 64);
  REQUIRE(specs.size() == 2);
  CHECK(specs[0].conv.in_channels == 1);
  CHECK(specs[0].output_size() == 4 * 8 * 8);
  CHECK(specs[1].in_features == 256);
  CHECK(code_of([&] { build_layers(c, 65); }) == ErrorCode::DimMismatch);

  CHECK(code_of([] { parse_config("colour = red\n"); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { parse_config("seed = 1\nseed = 2\n"); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { parse_config("epochs = ten\n"); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { parse_config("epochs = 3.5\n"); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { parse_config("layers = [dense:0:tanh]\n"); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { parse_config("layers = [conv:4:3:s1:p0:relu]\n"); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { parse_config("name = \"open\n"); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { parse_config("just text\n"); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { parse_config("methods = [KFAC, LBFGS]\n"); }) == ErrorCode::BadConfig);
}

TEST_CASE("idx parsing") {
  const IdxImages img = parse_idx_images(idx_fixture());
  CHECK(img.rows == 2);
  CHECK(img.cols == 2);
  REQUIRE(img.pixels.rows() == 4);
  REQUIRE(img.pixels.cols() == 2);
  CHECK(img.pixels(1, 0) == doctest::Approx(0.2));
  CHECK(img.pixels(3, 0) == 1.0);
  CHECK(img.pixels(0, 1) == 1.0);
  CHECK(img.pixels(3, 1) == 0.0);

  auto bad = idx_fixture();
  bad[3] = 1;
  CHECK(code_of([&] { parse_idx_images(bad); }) == ErrorCode::BadMagic);
  bad = idx_fixture();
  bad.pop_back();
  CHECK(code_of([&] { parse_idx_images(bad); }) == ErrorCode::TruncatedFile);
  bad = idx_fixture();
  bad.resize(10);
  CHECK(code_of([&] { parse_idx_images(bad); }) == ErrorCode::TruncatedFile);
  bad = idx_fixture();
  bad.push_back(7);
  CHECK(code_of([&] { parse_idx_images(bad); }) == ErrorCode::DimMismatch);

  const std::vector<std::uint8_t> labels{0, 0, 8, 1, 0, 0, 0, 3, 2, 0, 9};
  CHECK(parse_idx_labels(labels) == std::vector<int>{2, 0, 9});
  CHECK(code_of([&] { parse_idx_labels(idx_fixture()); }) == ErrorCode::BadMagic);
  auto shortl = labels;
  shortl.pop_back();
  CHECK(code_of([&] { parse_idx_labels(shortl); }) == ErrorCode::TruncatedFile);
}

TEST_CASE("idx files through load_dataset") {
  TempDir dir("idx");
  auto bytes = idx_fixture();
  spit(dir / "img.idx", std::string(bytes.begin(), bytes.end()));
  spit(dir / "lab.idx", std::string("\0\0\x08\x01\0\0\0\x02\x01\x00", 10));
  ExperimentConfig c;
  c.dataset = "idx";
  c.dataset_path = dir / "img.idx";
  c.labels_path = dir / "lab.idx";
  c.dataset_size = 0;
  Dataset d = load_dataset(c, 2);
  CHECK(d.size() == 2);
  CHECK(d.targets == (Matrix(2, 2) << 0, 1, 1, 0).finished());
  c.autoencoder = true;
  d = load_dataset(c, 4);
  CHECK(d.targets == d.inputs);
  c.dataset_path = dir / "missing.idx";
  CHECK(code_of([&] { load_dataset(c, 4); }) == ErrorCode::Io);
}

TEST_CASE("csv parsing") {
  const CsvTable t = parse_csv("x1,x2,label\n0.5,1,0\n-2,3.25,2\n1e-3,0,1\n");
  REQUIRE(t.features.cols() == 3);
  CHECK(t.features.rows() == 2);
  CHECK(t.features(1, 1) == 3.25);
  CHECK(t.labels == std::vector<int>{0, 2, 1});
  CHECK(one_hot(t.labels, 0) == (Matrix(3, 3) << 1, 0, 0, 0, 0, 1, 0, 1, 0).finished());
  CHECK(code_of([] { parse_csv("a,b,label\n1,2,0\n1,0\n"); }) == ErrorCode::DimMismatch);
  CHECK(code_of([] { parse_csv("a,label\n1,x\n"); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { parse_csv("a,label\n1,0.5\n"); }) == ErrorCode::BadConfig);
}

TEST_CASE("synthetic data") {
  const Dataset a = synthetic_regression(50, 6, 3, 0, 7), b = synthetic_regression(50, 6, 3, 0, 7);
  CHECK(a.inputs == b.inputs);
  CHECK(a.targets == b.targets);
  CHECK(a.inputs != synthetic_regression(50, 6, 3, 0, 8).inputs);
  const Dataset cls = synthetic_regression(40, 6, 4, 4, 7);
  CHECK(cls.targets.colwise().sum() == Matrix::Ones(1, 40));
  const Dataset ae = synthetic_autoencoder(30, 10, 7);
  CHECK(ae.targets == ae.inputs);
  CHECK(ae.inputs.minCoeff() > 0.0);
  CHECK(ae.inputs.maxCoeff() < 1.0);
}

TEST_CASE("run log format") {
  RunLog log{"r", "NICO", {}};
  log.rows.push_back({"r", "NICO", 1, 4, 0.1 + 0.2, -1.0 / 3.0, std::nullopt, 0.0});
  log.rows.push_back({"r", "NICO", 2, 8, 1e-300, std::nullopt, 2.5, 1.25});
  const std::string text = format_run_log(log);
  CHECK(lines(text)[0] == kRunLogHeader);
  const RunLog back = parse_run_log(text);
  REQUIRE(back.rows.size() == 2);
  CHECK(back.rows[0].loss == 0.1 + 0.2);
  CHECK(*back.rows[0].gap == -1.0 / 3.0);
  CHECK(!back.rows[0].residual_norm);
  CHECK(!back.rows[1].gap);
  CHECK(back.rows[1].loss == 1e-300);
  CHECK(format_run_log(back) == text);
  CHECK(code_of([] { parse_run_log("bad,header\n"); }) == ErrorCode::BadConfig);
}

TEST_CASE("atomic write") {
  TempDir dir("atomic");
  const std::string p = dir / "out.csv";
  write_atomic(p, "first");
  write_atomic(p, "second");
  CHECK(slurp(p) == "second");
  CHECK(!fs::exists(p + ".tmp"));
  CHECK(failed_marker_path(p) == p + ".failed");
}

TEST_CASE("run_experiment") {
  TempDir dir("exp");
  ExperimentConfig c = small_config(dir.path.string());

  SUBCASE("zero epochs gives header-only logs") {
    c.epochs = 0;
    const ExperimentResult r = run_experiment(c);
    CHECK(r.exit_code() == 0);
    for (const auto& run : r.runs) CHECK(slurp(run.csv_path) == std::string(kRunLogHeader) + "\n");
  }
  SUBCASE("shared initialization, one row per epoch") {
    const ExperimentResult r = run_experiment(c);
    REQUIRE(r.runs.size() == 2);
    CHECK(r.ok());
    CHECK(r.runs[0].record.initial_loss == r.runs[1].record.initial_loss);
    CHECK(r.runs[0].run_id == "small-kfac-s3");
    for (const auto& run : r.runs) {
      CHECK(lines(slurp(run.csv_path)).size() == run.record.epochs.size() + 1);
      CHECK(run.record.epochs.size() == 3);
      CHECK(!fs::exists(failed_marker_path(run.csv_path)));
    }
    const RunLog nico = read_run_log(r.runs[1].csv_path);
    for (const auto& row : nico.rows) CHECK(*row.gap <= 1e-12);
    CHECK(!read_run_log(r.runs[0].csv_path).rows[0].gap);
  }
  SUBCASE("overrides and step traces") {
    c.step_trace = true;
    RunOptions o;
    o.epochs = 2;
    o.seed = 11;
    o.device_threads = 2;
    const ExperimentResult r = run_experiment(c, o);
    CHECK(r.runs[0].run_id == "small-kfac-s11");
    CHECK(r.runs[0].record.epochs.size() == 2);
    const std::string trace = dir / "small-nico-s11.steps.csv";
    CHECK(lines(slurp(trace)).size() == 2 * 4 + 1);
  }
  SUBCASE("divergence leaves the partial log and a marker") {
    make_diverging(c);
    const std::string marker = dir / "small-sgd-s3.csv.failed";
    spit(marker, "stale");
    const ExperimentResult r = run_experiment(c);
    CHECK(r.exit_code() == 1);
    CHECK(r.runs[0].record.status == RunStatus::Diverged);
    CHECK(fs::exists(r.runs[0].csv_path));
    CHECK(slurp(marker) != "stale");
    c.learning_rate = 0.01;
    CHECK(run_experiment(c).exit_code() == 0);
    CHECK(!fs::exists(marker));
  }
  SUBCASE("bad configs") {
    c.batch_size = 65;
    CHECK(code_of([&] { run_experiment(c); }) == ErrorCode::BadConfig);
    c.batch_size = 16;
    c.loss = LossKind::CrossEntropy;
    c.classes = 3;  // network has 2 outputs
    CHECK(code_of([&] { run_experiment(c); }) == ErrorCode::DimMismatch);
  }
}

TEST_CASE("plots") {
  RunLog log{"r", "KFAC", {}};
  for (int k = 1; k <= 3; ++k) log.rows.push_back({"r", "KFAC", k, 4L * k, 1.0 / k, std::nullopt, std::nullopt, 0});
  const std::string svg = render_svg({log}, PlotKind::Loss);
  CHECK(svg.rfind("<svg", 0) == 0);
  const auto at = svg.find("<polyline");
  REQUIRE(at != std::string::npos);
  CHECK(svg.find("<polyline", at + 1) == std::string::npos);
  const auto p0 = svg.find("points=\"", at) + 8;
  const std::string pts = svg.substr(p0, svg.find('"', p0) - p0);
  CHECK(std::count(pts.begin(), pts.end(), ',') == 3);
  CHECK(svg.find(">KFAC<") != std::string::npos);
  CHECK(render_svg({log}, PlotKind::Loss) == svg);
  CHECK(code_of([] { render_svg({}, PlotKind::Loss); }) == ErrorCode::BadConfig);

  SUBCASE("gap plot of a two-level run stays below zero") {
    TempDir dir("plot");
    ExperimentConfig c = small_config(dir.path.string());
    c.methods = {Method::NICO, Method::KRY_RESIDU};
    const ExperimentResult r = run_experiment(c);
    std::vector<RunLog> logs;
    for (const auto& run : r.runs) logs.push_back(read_run_log(run.csv_path));
    for (const auto& l : logs)
      for (const auto& row : l.rows) CHECK(*row.gap <= 0.0);
    const std::string gsvg = render_svg(logs, PlotKind::Gap);
    // the top of the plot area is y = 0, so every vertex sits at or below pixel row 30
    for (auto pos = gsvg.find("<polyline"); pos != std::string::npos; pos = gsvg.find("<polyline", pos + 1)) {
      const auto b = gsvg.find("points=\"", pos) + 8;
      std::istringstream in(gsvg.substr(b, gsvg.find('"', b) - b));
      for (std::string xy; in >> xy;) CHECK(std::stod(xy.substr(xy.find(',') + 1)) >= 30.0);
    }
    render_plot(logs, dir / "gap.svg", PlotKind::Gap);
    CHECK(slurp(dir / "gap.svg") == gsvg);
  }
}

TEST_CASE("cli exit codes") {
  TempDir dir("cli");
  ExperimentConfig c = small_config(dir / "runs");
  spit(dir / "ok.toml", serialize_config(c));
  CHECK(cli("run " + dir / "ok.toml") == 0);
  CHECK(fs::exists(dir / "runs/small-nico-s3.csv"));
  CHECK(cli("run " + dir / "ok.toml --seed 4 --epochs 1 --device-threads 2") == 0);
  CHECK(cli("plot " + dir / "runs/small-nico-s3.csv " + dir / "runs/small-kfac-s3.csv -o " + dir / "p.svg") == 0);
  CHECK(cli("plot " + dir / "runs/small-nico-s3.csv --gap -o " + dir / "g.svg") == 0);
  CHECK(fs::exists(dir / "g.svg"));

  make_diverging(c);
  spit(dir / "diverge.toml", serialize_config(c));
  CHECK(cli("run " + dir / "diverge.toml") == 1);
  c.grid = true;
  c.grid_lr = {1e8};
  spit(dir / "noviable.toml", serialize_config(c));
  CHECK(cli("grid " + dir / "noviable.toml") == 1);

  spit(dir / "bad.toml", "epochs = many\n");
  CHECK(cli("run " + dir / "bad.toml") == 2);
  CHECK(cli("run " + dir / "missing.toml") == 2);
  CHECK(cli("frobnicate") == 2);
  CHECK(cli("run") == 2);
  CHECK(cli("plot " + dir / "missing.csv -o " + dir / "x.svg") == 2);
}
