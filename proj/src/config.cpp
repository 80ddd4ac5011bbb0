#include "kfac2l/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace kfac2l {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::BadConfig, what); }

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(trim(cur));
  return parts;
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front())
    return s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> parse_list(std::string s) {
  s = trim(s);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') bad("unterminated list '" + s + "'");
    s = trim(s.substr(1, s.size() - 2));
  }
  if (s.empty()) return {};
  std::vector<std::string> items;
  for (auto& item : split(s, ',')) {
    if (item.empty()) bad("empty list item in '" + s + "'");
    items.push_back(unquote(item));
  }
  return items;
}

template <class T>
T parse_number(const std::string& key, const std::string& s) {
  T value{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) bad("'" + key + "': expected a number, got '" + s + "'");
  return value;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  bad("'" + key + "': expected true/false, got '" + s + "'");
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string join(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t k = 0; k < items.size(); ++k) out += (k ? ", " : "") + items[k];
  return out + "]";
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

Index parse_prefixed(const std::string& token, char prefix, const std::string& whole) {
  if (token.size() < 2 || token[0] != prefix) bad("layer '" + whole + "': expected " + prefix + "<n>");
  return parse_number<Index>(whole, token.substr(1));
}

}  // namespace

LayerToken parse_layer_token(const std::string& text) {
  const auto parts = split(text, ':');
  LayerToken t;
  if (parts[0] == "dense") {
    if (parts.size() != 3) bad("layer '" + text + "': expected dense:<out>:<activation>");
    t.kind = LayerKind::Dense;
    t.out = parse_number<Index>(text, parts[1]);
    t.activation = parse_activation(parts[2]);
  } else if (parts[0] == "conv") {
    if (parts.size() != 6) bad("layer '" + text + "': expected conv:<c>:<kh>x<kw>:s<n>:p<n>:<activation>");
    t.kind = LayerKind::Conv;
    t.out = parse_number<Index>(text, parts[1]);
    const auto k = split(parts[2], 'x');
    if (k.size() != 2) bad("layer '" + text + "': kernel must be <kh>x<kw>");
    t.kernel_height = parse_number<Index>(text, k[0]);
    t.kernel_width = parse_number<Index>(text, k[1]);
    t.stride = parse_prefixed(parts[3], 's', text);
    t.padding = parse_prefixed(parts[4], 'p', text);
    t.activation = parse_activation(parts[5]);
  } else {
    bad("layer '" + text + "': kind must be dense or conv");
  }
  if (t.out < 1 || t.kernel_height < 1 || t.kernel_width < 1 || t.stride < 1 || t.padding < 0)
    bad("layer '" + text + "': sizes must be positive");
  return t;
}

std::string to_string(const LayerToken& t) {
  if (t.kind == LayerKind::Dense)
    return "dense:" + std::to_string(t.out) + ":" + to_string(t.activation);
  return "conv:" + std::to_string(t.out) + ":" + std::to_string(t.kernel_height) + "x" +
         std::to_string(t.kernel_width) + ":s" + std::to_string(t.stride) + ":p" +
         std::to_string(t.padding) + ":" + to_string(t.activation);
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line;
  std::map<std::string, int> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
      if (line[k] == '"') quoted = !quoted;
      if (line[k] == '#' && !quoted) {
        line.resize(k);
        break;
      }
    }
    if (quoted) bad("line " + std::to_string(lineno) + ": unterminated string");
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) bad("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string raw = trim(line.substr(eq + 1));
    const std::string v = unquote(raw);
    if (seen[key]++) bad("duplicate key '" + key + "'");

    if (key == "name") c.name = v;
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "epochs") c.epochs = parse_number<int>(key, v);
    else if (key == "batch_size") c.batch_size = parse_number<Index>(key, v);
    else if (key == "loss") c.loss = parse_loss(v);
    else if (key == "dataset") c.dataset = v;
    else if (key == "dataset_path") c.dataset_path = v;
    else if (key == "labels_path") c.labels_path = v;
    else if (key == "dataset_size") c.dataset_size = parse_number<Index>(key, v);
    else if (key == "dataset_dim") c.dataset_dim = parse_number<Index>(key, v);
    else if (key == "classes") c.classes = parse_number<Index>(key, v);
    else if (key == "autoencoder") c.autoencoder = parse_bool(key, v);
    else if (key == "input_shape") {
      const auto dims = split(v, 'x');
      if (dims.size() != 3) bad("input_shape must be CxHxW");
      c.has_input_shape = true;
      c.input_shape = {parse_number<Index>(key, dims[0]), parse_number<Index>(key, dims[1]),
                       parse_number<Index>(key, dims[2])};
    } else if (key == "layers") {
      c.layers.clear();
      for (const auto& item : parse_list(raw)) c.layers.push_back(parse_layer_token(item));
    } else if (key == "methods") {
      c.methods.clear();
      for (const auto& item : parse_list(raw)) c.methods.push_back(parse_method(item));
    } else if (key == "learning_rate") c.learning_rate = parse_number<double>(key, v);
    else if (key == "damping") c.damping = parse_number<double>(key, v);
    else if (key == "weight_decay") c.weight_decay = parse_number<double>(key, v);
    else if (key == "taylor_order") c.taylor_order = parse_number<int>(key, v);
    else if (key == "patience") c.patience = parse_number<int>(key, v);
    else if (key == "fisher") {
      if (v == "sampled") c.fisher = FisherEstimate::Sampled;
      else if (v == "expected") c.fisher = FisherEstimate::Expected;
      else bad("fisher must be sampled or expected");
    } else if (key == "grid") c.grid = parse_bool(key, v);
    else if (key == "grid_full") c.grid_full = parse_bool(key, v);
    else if (key == "grid_lr" || key == "grid_damping") {
      std::vector<double> values;
      for (const auto& item : parse_list(raw)) values.push_back(parse_number<double>(key, item));
      (key == "grid_lr" ? c.grid_lr : c.grid_damping) = values;
    } else if (key == "output_dir") c.output_dir = v;
    else if (key == "record_time") c.record_time = parse_bool(key, v);
    else if (key == "step_trace") c.step_trace = parse_bool(key, v);
    else bad("unknown key '" + key + "'");
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) bad("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  std::vector<std::string> layers, methods, lrs, dampings;
  for (const auto& t : c.layers) layers.push_back(to_string(t));
  for (Method m : c.methods) methods.push_back(to_string(m));
  for (double x : c.grid_lr) lrs.push_back(fmt(x));
  for (double x : c.grid_damping) dampings.push_back(fmt(x));
  auto b = [](bool x) { return std::string(x ? "true" : "false"); };

  std::ostringstream out;
  out << "name = " << quote(c.name) << "\n"
      << "seed = " << c.seed << "\n"
      << "epochs = " << c.epochs << "\n"
      << "batch_size = " << c.batch_size << "\n"
      << "loss = " << to_string(c.loss) << "\n"
      << "dataset = " << quote(c.dataset) << "\n"
      << "dataset_path = " << quote(c.dataset_path) << "\n"
      << "labels_path = " << quote(c.labels_path) << "\n"
      << "dataset_size = " << c.dataset_size << "\n"
      << "dataset_dim = " << c.dataset_dim << "\n"
      << "classes = " << c.classes << "\n"
      << "autoencoder = " << b(c.autoencoder) << "\n";
  if (c.has_input_shape)
    out << "input_shape = " << c.input_shape.channels << "x" << c.input_shape.height << "x"
        << c.input_shape.width << "\n";
  out << "layers = " << join(layers) << "\n"
      << "methods = " << join(methods) << "\n"
      << "learning_rate = " << fmt(c.learning_rate) << "\n"
      << "damping = " << fmt(c.damping) << "\n"
      << "weight_decay = " << fmt(c.weight_decay) << "\n"
      << "taylor_order = " << c.taylor_order << "\n"
      << "patience = " << c.patience << "\n"
      << "fisher = " << (c.fisher == FisherEstimate::Sampled ? "sampled" : "expected") << "\n"
      << "grid = " << b(c.grid) << "\n"
      << "grid_full = " << b(c.grid_full) << "\n"
      << "grid_lr = " << join(lrs) << "\n"
      << "grid_damping = " << join(dampings) << "\n"
      << "output_dir = " << quote(c.output_dir) << "\n"
      << "record_time = " << b(c.record_time) << "\n"
      << "step_trace = " << b(c.step_trace) << "\n";
  return out.str();
}

void validate(const ExperimentConfig& c) {
  if (c.layers.empty()) bad("no layers given");
  if (c.methods.empty()) bad("no methods given");
  if (c.epochs < 0) bad("epochs must be >= 0");
  if (c.batch_size < 1) bad("batch_size must be >= 1");
  if (c.patience < 1) bad("patience must be >= 1");
  if (c.taylor_order < 1) bad("taylor_order must be >= 1");
  if (!(c.learning_rate > 0.0) || !(c.damping >= 0.0) || !(c.weight_decay >= 0.0))
    bad("learning_rate must be positive, damping and weight_decay nonnegative");
  if (c.dataset != "idx" && c.dataset != "csv" && c.dataset != "synthetic-regression" &&
      c.dataset != "synthetic-autoencoder")
    bad("unknown dataset '" + c.dataset + "'");
  if ((c.dataset == "idx" || c.dataset == "csv") && c.dataset_path.empty())
    bad("dataset '" + c.dataset + "' needs dataset_path");
  if (c.dataset.rfind("synthetic", 0) == 0 && c.dataset_size < 1) bad("dataset_size must be >= 1");
  if (c.layers.front().kind == LayerKind::Conv && !c.has_input_shape)
    bad("a leading conv layer needs input_shape");
  if (c.grid && !c.grid_full && c.grid_lr.empty()) bad("grid_lr is empty");
  for (double x : c.grid_lr)
    if (!(x > 0.0)) bad("grid_lr values must be positive");
  for (double x : c.grid_damping)
    if (!(x >= 0.0)) bad("grid_damping values must be nonnegative");
}

std::vector<LayerSpec> build_layers(const ExperimentConfig& c, Index input_size) {
  if (c.has_input_shape && c.input_shape.size() != input_size)
    throw Error(ErrorCode::DimMismatch, "input_shape does not match the dataset input size");
  std::vector<LayerSpec> specs;
  bool spatial = c.has_input_shape;
  InputShape shape = c.input_shape;
  Index size = input_size;
  for (const auto& t : c.layers) {
    if (t.kind == LayerKind::Dense) {
      specs.push_back(LayerSpec::dense(size, t.out, t.activation));
      spatial = false;
      size = t.out;
      continue;
    }
    if (!spatial) bad("conv layer '" + to_string(t) + "' needs a spatial input");
    ConvGeometry g{shape.channels, shape.height, shape.width, t.out,
                   t.kernel_height, t.kernel_width, t.stride, t.padding};
    if (shape.height + 2 * t.padding < t.kernel_height || shape.width + 2 * t.padding < t.kernel_width)
      bad("conv layer '" + to_string(t) + "': kernel larger than the padded input");
    specs.push_back(LayerSpec::convolution(g, t.activation));
    shape = {t.out, g.out_height(), g.out_width()};
    size = shape.size();
  }
  return specs;
}

OptimizerConfig optimizer_config(const ExperimentConfig& c, Method method) {
  OptimizerConfig o;
  o.method = method;
  o.learning_rate = c.learning_rate;
  o.damping = c.damping;
  o.weight_decay = c.weight_decay;
  o.taylor_order = c.taylor_order;
  o.seed = c.seed;
  o.fisher = c.fisher;
  return o;
}

}  // namespace kfac2l
