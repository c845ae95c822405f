#include "hrc/dqn_agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "hrc/error.hpp"
#include "hrc/numeric_text.hpp"

namespace hrc {

ObservationScale ObservationScale::from(const PhysicsParams& params, double angle_range) {
  return {params.pendulum_half_length, angle_range, params.slider_half_range, 1.0};
}

Features to_features(const Observation& obs, const ObservationScale& scale) {
  Features f;
  f << obs.ball_pos / scale.ball_pos, obs.pendulum_angle / scale.pendulum_angle,
      obs.slider_pos / scale.slider_pos, obs.partner_prev_action / scale.partner_action;
  return f;
}

void ActionSet::validate() const {
  if (levels.empty()) throw ConfigError("action set has no levels");
  bool has_zero = false;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(levels[i] >= -1.0 && levels[i] <= 1.0))
      throw ConfigError("action levels must lie in [-1, 1]");
    if (i > 0 && !(levels[i] > levels[i - 1]))
      throw ConfigError("action levels must be strictly increasing");
    has_zero = has_zero || levels[i] == 0.0;
  }
  if (!has_zero) throw ConfigError("action levels must contain 0");
}

ControlInput ActionSet::input(int index, const PhysicsParams& params) const {
  const double level = levels.at(static_cast<std::size_t>(index));
  if (channel == Channel::SliderForce) return {level * params.force_limit, 0.0};
  return {0.0, level * params.torque_limit};
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be > 0");
  data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(const Transition& t) {
  if (data_.size() < capacity_) {
    data_.push_back(t);
  } else {
    data_[next_] = t;
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch_size, std::mt19937_64& rng) const {
  if (batch_size > data_.size()) throw ConfigError("replay sample larger than buffer");
  // Partial Fisher-Yates over an index permutation.
  std::vector<std::size_t> index(data_.size());
  std::iota(index.begin(), index.end(), std::size_t{0});
  std::vector<Transition> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, index.size() - 1);
    std::swap(index[i], index[pick(rng)]);
    batch.push_back(data_[index[i]]);
  }
  return batch;
}

void ReplayBuffer::clear() {
  data_.clear();
  next_ = 0;
}

double EpsilonSchedule::at(int episode) const {
  return std::max(end, start * std::pow(decay, episode));
}

void AgentConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(epsilon.start >= 0.0 && epsilon.start <= 1.0 && epsilon.end >= 0.0 && epsilon.end <= 1.0))
    throw ConfigError("epsilon bounds must lie in [0, 1]");
  if (!(epsilon.decay > 0.0 && epsilon.decay <= 1.0)) throw ConfigError("epsilon decay must lie in (0, 1]");
  if (batch_size == 0) throw ConfigError("batch_size must be > 0");
  if (target_sync_period <= 0) throw ConfigError("target_sync_period must be > 0");
  if (replay_capacity < batch_size) throw ConfigError("replay_capacity must be >= batch_size");
  for (int h : hidden_sizes)
    if (h <= 0) throw ConfigError("hidden layer widths must be > 0");
}

double td_target(double reward, double gamma, const Eigen::Ref<const Eigen::VectorXd>& next_q) {
  return reward + gamma * next_q.maxCoeff();
}

Eigen::VectorXd forward(const QNetwork& net, const Features& features) {
  if (!features.allFinite()) throw NumericFault("forward: non-finite observation");
  return net.forward(features);
}

int greedy_action(const Eigen::Ref<const Eigen::VectorXd>& q) {
  int best = 0;
  for (int i = 1; i < q.size(); ++i)
    if (q(i) > q(best)) best = i;
  return best;
}

int select_action(const QNetwork& net, const Features& features, double epsilon,
                  std::mt19937_64& rng) {
  if (epsilon > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon)
    return std::uniform_int_distribution<int>(0, net.output_size() - 1)(rng);
  return greedy_action(forward(net, features));
}

namespace {

struct BatchMatrices {
  Eigen::MatrixXd obs;
  Eigen::MatrixXd next_obs;
};

BatchMatrices stack(const std::vector<Transition>& batch) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  BatchMatrices m{Eigen::MatrixXd(kObservationSize, n), Eigen::MatrixXd(kObservationSize, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    m.obs.col(i) = batch[i].obs;
    m.next_obs.col(i) = batch[i].next_obs;
  }
  return m;
}

// Output-gradient of the mean squared TD error, plus the loss itself.
double td_output_gradient(const QNetwork& net, const QNetwork& target, const std::vector<Transition>& batch,
                          double gamma, const BatchMatrices& m, Eigen::MatrixXd* grad) {
  const Eigen::MatrixXd q = net.forward_batch(m.obs);
  const Eigen::MatrixXd next_q = target.forward_batch(m.next_obs);
  const double n = static_cast<double>(batch.size());
  if (grad) *grad = Eigen::MatrixXd::Zero(q.rows(), q.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < q.cols(); ++i) {
    const int a = batch[static_cast<std::size_t>(i)].action;
    const double y = td_target(batch[static_cast<std::size_t>(i)].reward, gamma, next_q.col(i));
    const double err = q(a, i) - y;
    loss += err * err;
    if (grad) (*grad)(a, i) = 2.0 * err / n;
  }
  return loss / n;
}

}  // namespace

double batch_loss(const QNetwork& net, const QNetwork& target, const std::vector<Transition>& batch,
                  double gamma) {
  return td_output_gradient(net, target, batch, gamma, stack(batch), nullptr);
}

std::vector<QNetwork::Layer> batch_gradient(const QNetwork& net, const QNetwork& target,
                                            const std::vector<Transition>& batch, double gamma) {
  const BatchMatrices m = stack(batch);
  Eigen::MatrixXd grad;
  td_output_gradient(net, target, batch, gamma, m, &grad);
  return net.backward(m.obs, grad);
}

DqnAgent::DqnAgent(const AgentConfig& config, int action_count, std::uint64_t seed)
    : config_(config), replay_(config.replay_capacity), rng_(seed) {
  config_.validate();
  if (action_count <= 0) throw ConfigError("action_count must be > 0");
  std::vector<int> sizes{kObservationSize};
  sizes.insert(sizes.end(), config_.hidden_sizes.begin(), config_.hidden_sizes.end());
  sizes.push_back(action_count);
  online_ = QNetwork::he_initialized(sizes, rng_);
  target_ = online_;
}

int DqnAgent::select_action(const Features& features, double epsilon) {
  return hrc::select_action(online_, features, epsilon, rng_);
}

Eigen::VectorXd DqnAgent::q_values(const Features& features) const {
  return forward(online_, features);
}

std::optional<double> DqnAgent::train_step() {
  if (replay_.size() < config_.batch_size) return std::nullopt;
  const double loss = train_batch(replay_.sample(config_.batch_size, rng_));
  ++updates_;
  if (updates_ % config_.target_sync_period == 0) sync_target();
  return loss;
}

double DqnAgent::train_batch(const std::vector<Transition>& batch) {
  if (batch.empty()) throw ConfigError("train_batch: empty batch");
  for (const auto& t : batch)
    if (t.action < 0 || t.action >= action_count())
      throw ConfigError("train_batch: action index out of range");
  const BatchMatrices m = stack(batch);
  Eigen::MatrixXd grad;
  const double loss = td_output_gradient(online_, target_, batch, config_.gamma, m, &grad);
  const auto grads = online_.backward(m.obs, grad);
  if (!std::isfinite(loss) || !gradients_finite<double>(grads))
    throw NumericFault("train_batch: non-finite loss or gradient (loss=" + format_double(loss) +
                       ", updates=" + std::to_string(updates_) + ")");
  online_.apply_gradient(grads, config_.learning_rate);
  return loss;
}

// ---- weight files ----

void write_weights(std::ostream& out, const QNetwork& net) {
  out << "hrc-qnet\n";
  out << "version " << kWeightFormatVersion << '\n';
  out << "activation relu\n";
  out << "layers";
  for (int s : net.sizes()) out << ' ' << s;
  out << '\n';
  const auto& layers = net.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& w = layers[k].weights;
    out << "weights " << k << ' ' << w.rows() << ' ' << w.cols() << '\n';
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) out << (c ? " " : "") << format_double(w(r, c));
      out << '\n';
    }
    const auto& b = layers[k].bias;
    out << "bias " << k << ' ' << b.size() << '\n';
    for (Eigen::Index r = 0; r < b.size(); ++r) out << (r ? " " : "") << format_double(b(r));
    out << '\n';
  }
  out << "end\n";
}

namespace {

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::vector<std::string> tokens(const std::string& expecting) {
    std::string line;
    if (!std::getline(in_, line))
      throw FormatError("weights: unexpected end of file while reading " + expecting);
    ++line_no_;
    std::istringstream ss(line);
    std::vector<std::string> out;
    for (std::string tok; ss >> tok;) out.push_back(tok);
    return out;
  }

  std::string where() const { return "line " + std::to_string(line_no_); }

 private:
  std::istream& in_;
  int line_no_ = 0;
};

void expect(bool ok, const LineReader& r, const std::string& field, const std::string& detail) {
  if (!ok) throw FormatError("weights: bad '" + field + "' at " + r.where() + ": " + detail);
}

}  // namespace

QNetwork read_weights(std::istream& in) {
  LineReader reader(in);
  auto magic = reader.tokens("magic");
  expect(magic.size() == 1 && magic[0] == "hrc-qnet", reader, "magic", "expected 'hrc-qnet'");
  auto version = reader.tokens("version");
  expect(version.size() == 2 && version[0] == "version", reader, "version", "expected 'version <n>'");
  expect(parse_int(version[1], "version") == kWeightFormatVersion, reader, "version",
         "unsupported format version " + version[1]);
  auto activation = reader.tokens("activation");
  expect(activation.size() == 2 && activation[0] == "activation" && activation[1] == "relu", reader,
         "activation", "expected 'activation relu'");
  auto layers = reader.tokens("layers");
  expect(layers.size() >= 3 && layers[0] == "layers", reader, "layers", "expected at least two widths");
  std::vector<int> sizes;
  for (std::size_t i = 1; i < layers.size(); ++i) {
    const long s = parse_int(layers[i], "layers");
    expect(s > 0, reader, "layers", "widths must be positive");
    sizes.push_back(static_cast<int>(s));
  }

  QNetwork net(sizes);
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    auto& layer = net.layers()[k];
    const std::string wname = "weights " + std::to_string(k);
    auto header = reader.tokens(wname + " header");
    expect(header.size() == 4 && header[0] == "weights" && parse_int(header[1], "weights") == long(k),
           reader, wname, "expected 'weights " + std::to_string(k) + " <rows> <cols>'");
    expect(parse_int(header[2], "rows") == sizes[k + 1] && parse_int(header[3], "cols") == sizes[k], reader,
           wname, "shape does not match the declared layer sizes");
    for (int r = 0; r < sizes[k + 1]; ++r) {
      auto row = reader.tokens(wname + " row " + std::to_string(r));
      expect(static_cast<int>(row.size()) == sizes[k], reader, wname,
             "row " + std::to_string(r) + " has " + std::to_string(row.size()) + " values");
      for (int c = 0; c < sizes[k]; ++c) layer.weights(r, c) = parse_double(row[c], wname);
    }
    const std::string bname = "bias " + std::to_string(k);
    auto bheader = reader.tokens(bname + " header");
    expect(bheader.size() == 3 && bheader[0] == "bias" && parse_int(bheader[1], "bias") == long(k), reader,
           bname, "expected 'bias " + std::to_string(k) + " <size>'");
    expect(parse_int(bheader[2], "size") == sizes[k + 1], reader, bname,
           "size does not match the declared layer sizes");
    auto values = reader.tokens(bname + " values");
    expect(static_cast<int>(values.size()) == sizes[k + 1], reader, bname, "wrong number of values");
    for (int r = 0; r < sizes[k + 1]; ++r) layer.bias(r) = parse_double(values[r], bname);
  }
  auto end = reader.tokens("end marker");
  expect(end.size() == 1 && end[0] == "end", reader, "end", "expected 'end'");
  if (!net.all_finite()) throw FormatError("weights: non-finite parameter values");
  return net;
}

void save_weights(const QNetwork& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write weights: " + path.string());
  write_weights(out, net);
  if (!out) throw IoError("write failed: " + path.string());
}

QNetwork load_weights(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open weights: " + path.string());
  return read_weights(in);
}

}  // namespace hrc
