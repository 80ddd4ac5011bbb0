#include "kfac2l/optim.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "kfac2l/rng.hpp"

namespace kfac2l {

const char* to_string(Method m) {
  switch (m) {
    case Method::SGD: return "SGD";
    case Method::SGDMomentum: return "SGD-MOMENTUM";
    case Method::Adam: return "ADAM";
    case Method::KFAC: return "KFAC";
    case Method::ExactNGD: return "EXACT-NGD";
    case Method::NICO: return "NICO";
    case Method::SPECTRAL: return "SPECTRAL";
    case Method::RESIDU: return "RESIDU";
    case Method::KRY_NICO: return "KRY-NICO";
    case Method::KRY_RESIDU: return "KRY-RESIDU";
    case Method::PREVIOUS: return "PREVIOUS";
    case Method::TAYLOR: return "TAYLOR";
  }
  return "UNKNOWN";
}

Method parse_method(const std::string& raw) {
  std::string s;
  for (char c : raw) s += c == '_' ? '-' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (Method m : {Method::SGD, Method::SGDMomentum, Method::Adam, Method::KFAC, Method::ExactNGD,
                   Method::NICO, Method::SPECTRAL, Method::RESIDU, Method::KRY_NICO,
                   Method::KRY_RESIDU, Method::PREVIOUS, Method::TAYLOR}) {
    if (s == to_string(m)) return m;
  }
  if (s == "SGDMOMENTUM") return Method::SGDMomentum;
  if (s == "NGD" || s == "EXACTNGD") return Method::ExactNGD;
  throw Error(ErrorCode::BadConfig, "unknown method '" + raw + "'");
}

bool is_two_level(Method m) {
  switch (m) {
    case Method::NICO:
    case Method::SPECTRAL:
    case Method::RESIDU:
    case Method::KRY_NICO:
    case Method::KRY_RESIDU:
    case Method::PREVIOUS:
    case Method::TAYLOR: return true;
    default: return false;
  }
}

bool uses_damping(Method m) { return m == Method::KFAC || m == Method::ExactNGD || is_two_level(m); }

const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Completed: return "completed";
    case RunStatus::EarlyStopped: return "early-stopped";
    case RunStatus::Diverged: return "diverged";
    case RunStatus::Failed: return "failed";
  }
  return "unknown";
}

namespace {

CoarseSpace coarse_space_for(Method method, const std::vector<KfacBlock>& blocks,
                             const FisherOracle& oracle, const Vector& r, int taylor_order) {
  const ParamLayout& layout = oracle.layout();
  switch (method) {
    case Method::NICO:
    case Method::PREVIOUS: return build_nicolaides(layout);
    case Method::SPECTRAL: return build_spectral(blocks);
    case Method::RESIDU: return build_residuals(blocks, layout, r);
    case Method::TAYLOR: return build_taylor(blocks, oracle, r, taylor_order);
    case Method::KRY_NICO:
    case Method::KRY_RESIDU: {
      std::vector<Vector> seeds;
      for (std::size_t i = 0; i < layout.layers(); ++i) {
        Vector ones = Vector::Ones(layout.sizes[i]);
        if (method == Method::KRY_NICO) {
          seeds.push_back(ones);
          continue;
        }
        Vector seg = layout.segment(r, i);
        seeds.push_back(seg.norm() > 0.0 ? seg : ones);
      }
      return build_krylov(blocks, seeds,
                          method == Method::KRY_NICO ? CoarseKind::KrylovNico : CoarseKind::KrylovResidu);
    }
    default: break;
  }
  throw Error(ErrorCode::BadConfig, std::string("no coarse space for method ") + to_string(method));
}

}  // namespace

Direction natural_direction(const Network& net, const Batch& batch, const OptimizerConfig& config,
                            std::uint64_t sample_seed) {
  require(batch.inputs.cols() > 0, ErrorCode::EmptyBatch, "natural_direction: empty batch");
  const Method method = config.method;
  require(method == Method::KFAC || method == Method::ExactNGD || is_two_level(method),
          ErrorCode::BadConfig, std::string("natural_direction: ") + to_string(method) +
                                    " is not a natural-gradient method");
  const ParamLayout& layout = net.layout();

  Direction d;
  BatchCache cache = forward(net, batch.inputs);
  d.loss = mean_loss(net.loss(), cache.outputs, batch.targets);
  d.gradient = backward(net, cache, batch.targets) + config.weight_decay * net.theta();

  BatchCache fisher_cache;
  if (config.fisher == FisherEstimate::Expected) {
    fisher_cache = expected_fisher_cache(net, cache);
  } else {
    Matrix sampled = sample_targets(cache, sample_seed);
    backward(net, cache, sampled);
    fisher_cache = std::move(cache);
  }
  FisherOracle oracle(fisher_cache, layout, config.damping);

  if (method == Method::ExactNGD) {
    Matrix f = oracle.explicit_fim();
    f.diagonal().array() += config.damping;
    d.delta = linalg::solve_spd(f, d.gradient);
    d.delta_kfac = d.delta;
    return d;
  }

  const auto blocks = build_blocks(fisher_cache, config.damping);
  d.delta_kfac = kfac_apply_inverse(blocks, layout, d.gradient);
  const Vector r = residual(oracle, d.gradient, d.delta_kfac);
  d.residual_norm = r.norm();
  if (method == Method::KFAC) {
    d.delta = d.delta_kfac;
    return d;
  }

  const CoarseSpace space = coarse_space_for(method, blocks, oracle, r, config.taylor_order);
  const CoarseOperator op = coarse_operator(oracle, space);
  const Vector beta = method == Method::PREVIOUS ? beta_tko(op, space, layout, d.gradient)
                                                 : beta_star(op, space, layout, r);
  d.gap = gap(op, space, layout, beta, r);
  d.coarse_width = space.width();
  d.delta = apply_correction(d.delta_kfac, space, layout, beta);
  return d;
}

namespace {

void check_finite(double loss, const Network& net) {
  if (!std::isfinite(loss)) throw Error(ErrorCode::Diverged, "non-finite training loss");
  if (!net.theta().allFinite()) throw Error(ErrorCode::Diverged, "non-finite parameters");
}

Vector true_gradient(const Network& net, const Batch& batch, const OptimizerConfig& config,
                     double& loss) {
  BatchCache cache = forward(net, batch.inputs);
  loss = mean_loss(net.loss(), cache.outputs, batch.targets);
  return backward(net, cache, batch.targets) + config.weight_decay * net.theta();
}

}  // namespace

StepDiagnostics step_kfac2l(Network& net, const Batch& batch, const OptimizerConfig& config,
                            std::uint64_t sample_seed) {
  Direction d = natural_direction(net, batch, config, sample_seed);
  if (!std::isfinite(d.loss)) throw Error(ErrorCode::Diverged, "non-finite training loss");
  net.theta() -= config.learning_rate * d.delta;
  check_finite(d.loss, net);
  return {d.loss, d.gap, d.residual_norm};
}

StepDiagnostics step_sgd(Network& net, const Batch& batch, const OptimizerConfig& config,
                         FirstOrderState& state) {
  double loss = 0.0;
  Vector g = true_gradient(net, batch, config, loss);
  if (!std::isfinite(loss)) throw Error(ErrorCode::Diverged, "non-finite training loss");
  if (config.method == Method::SGDMomentum) {
    if (state.velocity.size() != g.size()) state.velocity = Vector::Zero(g.size());
    state.velocity = config.momentum * state.velocity + g;
    net.theta() -= config.learning_rate * state.velocity;
  } else {
    net.theta() -= config.learning_rate * g;
  }
  ++state.steps;
  check_finite(loss, net);
  return {loss, std::nullopt, std::nullopt};
}

StepDiagnostics step_adam(Network& net, const Batch& batch, const OptimizerConfig& config,
                          FirstOrderState& state) {
  double loss = 0.0;
  Vector g = true_gradient(net, batch, config, loss);
  if (!std::isfinite(loss)) throw Error(ErrorCode::Diverged, "non-finite training loss");
  if (state.velocity.size() != g.size()) {
    state.velocity = Vector::Zero(g.size());
    state.second = Vector::Zero(g.size());
  }
  ++state.steps;
  const double t = static_cast<double>(state.steps);
  state.velocity = config.adam_beta1 * state.velocity + (1.0 - config.adam_beta1) * g;
  state.second = config.adam_beta2 * state.second + (1.0 - config.adam_beta2) * g.cwiseAbs2();
  const Vector m_hat = state.velocity / (1.0 - std::pow(config.adam_beta1, t));
  const Vector v_hat = state.second / (1.0 - std::pow(config.adam_beta2, t));
  net.theta().array() -=
      config.learning_rate * m_hat.array() / (v_hat.array().sqrt() + config.adam_epsilon);
  check_finite(loss, net);
  return {loss, std::nullopt, std::nullopt};
}

StepDiagnostics Optimizer::step(Network& net, const Batch& batch, long step_index) {
  switch (m_config.method) {
    case Method::SGD:
    case Method::SGDMomentum: return step_sgd(net, batch, m_config, m_state);
    case Method::Adam: return step_adam(net, batch, m_config, m_state);
    default:
      return step_kfac2l(net, batch, m_config,
                         derive_seed(m_config.seed, Stream::TargetSampling,
                                     static_cast<std::uint64_t>(step_index)));
  }
}

StopDecision early_stopping(const std::vector<double>& history, int patience) {
  require(!history.empty(), ErrorCode::DimensionMismatch, "early_stopping: empty history");
  double best = history.front();
  int since = 0;
  for (std::size_t k = 1; k < history.size(); ++k) {
    if (history[k] < best) {
      best = history[k];
      since = 0;
    } else {
      ++since;
    }
  }
  return since >= patience ? StopDecision::Stop : StopDecision::Continue;
}

double RunRecord::best_loss() const {
  double best = initial_loss;
  for (const auto& e : epochs) best = std::min(best, e.loss);
  return best;
}

double RunRecord::final_loss() const { return epochs.empty() ? initial_loss : epochs.back().loss; }

Network make_network(const Problem& problem) {
  Network net(problem.layers, problem.loss);
  net.initialize(problem.seed);
  return net;
}

namespace {

Batch gather(const Dataset& data, const std::vector<Index>& order, Index start, Index count) {
  Batch batch{Matrix(data.inputs.rows(), count), Matrix(data.targets.rows(), count)};
  for (Index k = 0; k < count; ++k) {
    batch.inputs.col(k) = data.inputs.col(order[start + k]);
    batch.targets.col(k) = data.targets.col(order[start + k]);
  }
  return batch;
}

double dataset_loss(const Network& net, const Dataset& data) {
  BatchCache cache = forward(net, data.inputs);
  return mean_loss(net.loss(), cache.outputs, data.targets);
}

}  // namespace

RunRecord train(const Problem& problem, const OptimizerConfig& config) {
  const Dataset& data = problem.data;
  require(data.size() > 0, ErrorCode::EmptyBatch, "train: empty dataset");
  require(problem.batch_size >= 1 && problem.batch_size <= data.size(), ErrorCode::BadConfig,
          "train: batch size must lie in [1, dataset size]");
  require(data.targets.cols() == data.size(), ErrorCode::DimMismatch,
          "train: inputs and targets disagree on the sample count");

  RunRecord record;
  record.config = config;
  record.config.seed = problem.seed;
  Network net = make_network(problem);
  Optimizer optimizer(record.config);

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  auto elapsed = [&] {
    return problem.record_time ? std::chrono::duration<double>(clock::now() - start).count() : 0.0;
  };

  record.initial_loss = dataset_loss(net, data);
  const Index per_epoch = data.size() / problem.batch_size;
  std::vector<double> history;
  long step = 0;
  try {
    if (!std::isfinite(record.initial_loss)) throw Error(ErrorCode::Diverged, "non-finite initial loss");
    for (int epoch = 1; epoch <= problem.epochs; ++epoch) {
      std::vector<Index> order(static_cast<std::size_t>(data.size()));
      std::iota(order.begin(), order.end(), Index{0});
      auto engine = make_engine(problem.seed, Stream::Shuffle, static_cast<std::uint64_t>(epoch));
      std::shuffle(order.begin(), order.end(), engine);

      EpochRecord er;
      er.epoch = epoch;
      for (Index k = 0; k < per_epoch; ++k) {
        Batch batch = gather(data, order, k * problem.batch_size, problem.batch_size);
        StepDiagnostics diag = optimizer.step(net, batch, step);
        ++step;
        if (diag.gap) er.gap = er.gap ? std::max(*er.gap, *diag.gap) : *diag.gap;
        if (diag.residual_norm) er.residual_norm = diag.residual_norm;
        record.steps.push_back({step, epoch, diag.loss, diag.gap, diag.residual_norm, elapsed()});
      }
      er.step = step;
      er.loss = dataset_loss(net, data);
      er.seconds = elapsed();
      if (!std::isfinite(er.loss)) throw Error(ErrorCode::Diverged, "non-finite training loss");
      record.epochs.push_back(er);
      history.push_back(er.loss);
      if (early_stopping(history, problem.patience) == StopDecision::Stop) {
        record.status = RunStatus::EarlyStopped;
        break;
      }
    }
  } catch (const Error& e) {
    record.status = e.code() == ErrorCode::Diverged ? RunStatus::Diverged : RunStatus::Failed;
    record.message = e.what();
  }
  return record;
}

Grid Grid::full() {
  std::vector<double> values;
  for (int e = -4; e <= 4; ++e) values.push_back(std::pow(10.0, e));
  return {values, values};
}

GridResult grid_search(const Problem& problem, const OptimizerConfig& base, const Grid& grid,
                       int threads) {
  require(!grid.learning_rates.empty(), ErrorCode::BadConfig, "grid_search: empty learning-rate grid");
  std::vector<double> lrs = grid.learning_rates;
  std::vector<double> dampings = grid.dampings;
  std::sort(lrs.begin(), lrs.end());
  std::sort(dampings.begin(), dampings.end());
  if (!uses_damping(base.method) || dampings.empty()) dampings = {base.damping};

  std::vector<OptimizerConfig> configs;
  for (double lr : lrs) {
    for (double lambda : dampings) {
      OptimizerConfig c = base;
      c.learning_rate = lr;
      c.damping = lambda;
      configs.push_back(c);
    }
  }

  std::vector<RunRecord> records(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < configs.size(); k = next++) records[k] = train(problem, configs[k]);
  };
  const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(configs.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  GridResult result;
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    result.cells.push_back({configs[k], records[k].status, records[k].best_loss()});
    if (!records[k].ok()) continue;
    if (!best || records[k].best_loss() < records[*best].best_loss()) best = k;
  }
  if (!best) throw Error(ErrorCode::NoViableConfig, std::string("every grid cell failed for ") +
                                                        to_string(base.method));
  result.best = configs[*best];
  result.record = std::move(records[*best]);
  return result;
}

}  // namespace kfac2l
