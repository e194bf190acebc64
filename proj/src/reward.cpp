#include "sepoa/reward.hpp"

#include <algorithm>
#include <array>
#include <memory>
#include <numeric>

#include "sepoa/errors.hpp"

namespace sepoa {

using Eigen::MatrixXd;
using Eigen::VectorXd;

RewardEnsemble::RewardEnsemble(const EnvSpec& spec, Options options, std::uint64_t seed) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < options.members; ++i)
    seeds.push_back(stream_seed(seed, "init.reward." + std::to_string(i)));
  *this = RewardEnsemble(spec, options, seeds);
}

RewardEnsemble::RewardEnsemble(const EnvSpec& spec, Options options, std::span<const std::uint64_t> member_seeds)
    : bounds_(spec.bounds), action_count_(spec.action_count), seeds_(member_seeds.begin(), member_seeds.end()) {
  for (auto s : member_seeds) {
    members_.emplace_back(std::vector<int>{input_dim(), options.hidden, options.hidden, 1}, OutputActivation::Tanh, s);
    adam_.emplace_back(members_.back().param_count(), options.lr);
  }
}

MatrixXd RewardEnsemble::encode(std::span<const Transition> transitions) const {
  const auto sd = static_cast<Eigen::Index>(bounds_.size());
  MatrixXd in = MatrixXd::Zero(input_dim(), static_cast<Eigen::Index>(transitions.size()));
  for (std::size_t j = 0; j < transitions.size(); ++j) {
    const auto& t = transitions[j];
    const auto col = static_cast<Eigen::Index>(j);
    for (Eigen::Index i = 0; i < sd; ++i) in(i, col) = t.state[i] / bounds_[i];
    in(sd + t.action, col) = 1.0;
  }
  return in;
}

VectorXd RewardEnsemble::encode(std::span<const double> state, int action) const {
  if (state.size() != bounds_.size()) throw DimensionMismatch("reward model state size");
  VectorXd in = VectorXd::Zero(input_dim());
  for (std::size_t i = 0; i < state.size(); ++i) in(static_cast<Eigen::Index>(i)) = state[i] / bounds_[i];
  in(static_cast<Eigen::Index>(state.size()) + action) = 1.0;
  return in;
}

double RewardEnsemble::member_reward(std::size_t i, std::span<const double> state, int action) const {
  VectorXd in = encode(state, action);
  return members_[i].forward(std::span<const double>(in.data(), in.size()))(0);
}

double RewardEnsemble::mean_reward(std::span<const double> state, int action) const {
  VectorXd in = encode(state, action);
  double total = 0.0;
  for (const auto& m : members_) total += m.forward(std::span<const double>(in.data(), in.size()))(0);
  return total / static_cast<double>(members_.size());
}

Eigen::RowVectorXd RewardEnsemble::mean_rewards(const MatrixXd& encoded) const {
  Eigen::RowVectorXd total = Eigen::RowVectorXd::Zero(encoded.cols());
  for (const auto& m : members_) total += m.forward(encoded).row(0);
  return total / static_cast<double>(members_.size());
}

void PreferenceDataset::add(PreferenceTriple triple) {
  if (!triple.y.valid()) throw Error("preference label must be one-hot");
  labeled.push_back(std::move(triple));
}

double segment_return_hat(const RewardEnsemble& ens, std::size_t member, const Segment& seg) {
  return ens.member(member).forward(ens.encode(seg.transitions)).sum();
}

double segment_return_hat(const RewardEnsemble& ens, const Segment& seg) {
  return ens.mean_rewards(ens.encode(seg.transitions)).sum();
}

double bt_probability(double sum0, double sum1) { return losses::sigmoid(sum1 - sum0); }

double bt_probability(const RewardEnsemble& ens, std::size_t member, const Segment& seg0, const Segment& seg1) {
  return bt_probability(segment_return_hat(ens, member, seg0), segment_return_hat(ens, member, seg1));
}

std::vector<double> member_probabilities(const RewardEnsemble& ens, const Segment& seg0, const Segment& seg1) {
  MatrixXd in0 = ens.encode(seg0.transitions);
  MatrixXd in1 = ens.encode(seg1.transitions);
  std::vector<double> out;
  for (std::size_t i = 0; i < ens.size(); ++i)
    out.push_back(bt_probability(ens.member(i).forward(in0).sum(), ens.member(i).forward(in1).sum()));
  return out;
}

double mean_bt_probability(const RewardEnsemble& ens, const Segment& seg0, const Segment& seg1) {
  auto p = member_probabilities(ens, seg0, seg1);
  return std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
}

CeResult ce_loss_and_grad(const RewardEnsemble& ens, std::size_t member, std::span<const PreferenceTriple> batch) {
  if (batch.empty()) throw Error("cross-entropy over an empty batch");
  std::vector<Transition> steps;
  std::vector<std::array<std::size_t, 3>> spans;  // start, len0, len1
  for (const auto& tr : batch) {
    spans.push_back({steps.size(), tr.query.seg0.length(), tr.query.seg1.length()});
    steps.insert(steps.end(), tr.query.seg0.transitions.begin(), tr.query.seg0.transitions.end());
    steps.insert(steps.end(), tr.query.seg1.transitions.begin(), tr.query.seg1.transitions.end());
  }
  const auto n = static_cast<double>(batch.size());
  CeResult res;
  res.loss = loss_and_grad(
      ens.member(member), ens.encode(steps),
      [&](const MatrixXd& r, MatrixXd& d_out) {
        double total = 0.0;
        for (std::size_t k = 0; k < batch.size(); ++k) {
          auto [start, len0, len1] = spans[k];
          const auto s0 = static_cast<Eigen::Index>(start);
          const auto s1 = static_cast<Eigen::Index>(start + len0);
          double sum0 = r.row(0).segment(s0, static_cast<Eigen::Index>(len0)).sum();
          double sum1 = r.row(0).segment(s1, static_cast<Eigen::Index>(len1)).sum();
          double logit = sum1 - sum0;
          const auto& y = batch[k].y;
          total += -(y.first * losses::log_sigmoid(-logit) + y.second * losses::log_sigmoid(logit));
          double g = (losses::sigmoid(logit) * (y.first + y.second) - y.second) / n;
          d_out.row(0).segment(s1, static_cast<Eigen::Index>(len1)).array() = g;
          d_out.row(0).segment(s0, static_cast<Eigen::Index>(len0)).array() = -g;
        }
        return total / n;
      },
      res.grad);
  return res;
}

SegmentPair crop_pair(const Segment& a, const Segment& b, const SurfConfig& config, Rng& rng) {
  const auto shortest = std::min(a.length(), b.length());
  if (config.crop_min > config.crop_max || static_cast<std::size_t>(config.crop_max) > shortest)
    throw CropLongerThanSegment("crop length " + std::to_string(config.crop_max) + " exceeds segment length " +
                                std::to_string(shortest));
  const auto len = static_cast<std::size_t>(std::uniform_int_distribution<int>(config.crop_min, config.crop_max)(rng));
  auto crop = [&](const Segment& s) {
    auto off = uniform_index(rng, s.length() - len + 1);
    Segment out;
    out.traj_id = s.traj_id;
    out.start = s.start + static_cast<int>(off);
    out.transitions.assign(s.transitions.begin() + static_cast<std::ptrdiff_t>(off),
                           s.transitions.begin() + static_cast<std::ptrdiff_t>(off + len));
    return out;
  };
  Segment ca = crop(a);
  Segment cb = crop(b);
  return {std::move(ca), std::move(cb)};
}

std::vector<PreferenceTriple> surf_augment(const RewardEnsemble& ens, std::span<const PreferenceTriple> labeled,
                                           std::span<const SegmentPair> pool, const SurfConfig& config, Rng& rng) {
  std::vector<PreferenceTriple> out;
  for (const auto& tr : labeled) {
    const Segment& a = tr.query.wide0 ? *tr.query.wide0 : tr.query.seg0;
    const Segment& b = tr.query.wide1 ? *tr.query.wide1 : tr.query.seg1;
    auto [ca, cb] = crop_pair(a, b, config, rng);
    PreferenceTriple aug;
    aug.query.seg0 = std::move(ca);
    aug.query.seg1 = std::move(cb);
    aug.query.z0 = tr.query.z0;
    aug.query.z1 = tr.query.z1;
    aug.query.traj0_return_gt = tr.query.traj0_return_gt;
    aug.query.traj1_return_gt = tr.query.traj1_return_gt;
    aug.y = tr.y;
    out.push_back(std::move(aug));
  }

  const auto budget = std::min(pool.size(), static_cast<std::size_t>(config.mu) * labeled.size());
  for (std::size_t i = 0; i < budget; ++i) {
    const auto& [a, b] = pool[i];
    double p = mean_bt_probability(ens, a, b);
    std::optional<Preference> y;
    if (p >= config.threshold)
      y = Preference::prefer_second();
    else if (1.0 - p >= config.threshold)
      y = Preference::prefer_first();
    if (!y) continue;
    auto [ca, cb] = crop_pair(a, b, config, rng);
    PreferenceTriple aug;
    aug.query.seg0 = std::move(ca);
    aug.query.seg1 = std::move(cb);
    aug.query.z0 = a.transitions.front().skill;
    aug.query.z1 = b.transitions.front().skill;
    aug.y = *y;
    out.push_back(std::move(aug));
  }
  return out;
}

namespace {

using Eigen::Index;

struct EncodedTriple {
  MatrixXd seg0, seg1;
  MatrixXd wide0, wide1;  // parent windows used for cropping
  Preference y;
};

/// Column span of an encoded segment.
struct Piece {
  const MatrixXd* m;
  Index start;
  Index len;
};

struct PairBatch {
  std::vector<std::pair<Piece, Piece>> pairs;
  std::vector<Preference> labels;

  void add(Piece a, Piece b, Preference y) {
    pairs.emplace_back(a, b);
    labels.push_back(y);
  }
  std::size_t size() const { return pairs.size(); }
};

Piece whole(const MatrixXd& m) { return {&m, 0, m.cols()}; }

/// Same draws as crop_pair: one length, then an offset per segment.
std::pair<Piece, Piece> crop_pieces(const MatrixXd& a, const MatrixXd& b, const SurfConfig& config, Rng& rng) {
  const auto shortest = std::min(a.cols(), b.cols());
  if (config.crop_min > config.crop_max || config.crop_max > shortest)
    throw CropLongerThanSegment("crop length " + std::to_string(config.crop_max) + " exceeds segment length " +
                                std::to_string(shortest));
  const Index len = std::uniform_int_distribution<int>(config.crop_min, config.crop_max)(rng);
  const auto off_a = static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(a.cols() - len + 1)));
  const auto off_b = static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(b.cols() - len + 1)));
  return {{&a, off_a, len}, {&b, off_b, len}};
}

MatrixXd stack(const PairBatch& batch, std::vector<std::array<Index, 4>>& spans) {
  Index cols = 0;
  for (const auto& [a, b] : batch.pairs) cols += a.len + b.len;
  MatrixXd out(batch.pairs.front().first.m->rows(), cols);
  spans.clear();
  Index at = 0;
  for (const auto& [a, b] : batch.pairs) {
    out.middleCols(at, a.len) = a.m->middleCols(a.start, a.len);
    out.middleCols(at + a.len, b.len) = b.m->middleCols(b.start, b.len);
    spans.push_back({at, a.len, at + a.len, b.len});
    at += a.len + b.len;
  }
  return out;
}

double batch_ce(const Mlp& net, const PairBatch& batch, ParamVector& grad) {
  std::vector<std::array<Index, 4>> spans;
  MatrixXd in = stack(batch, spans);
  const auto n = static_cast<double>(batch.size());
  return loss_and_grad(
      net, in,
      [&](const MatrixXd& r, MatrixXd& d_out) {
        double total = 0.0;
        for (std::size_t k = 0; k < spans.size(); ++k) {
          auto [s0, len0, s1, len1] = spans[k];
          double logit = r.row(0).segment(s1, len1).sum() - r.row(0).segment(s0, len0).sum();
          const auto& y = batch.labels[k];
          total += -(y.first * losses::log_sigmoid(-logit) + y.second * losses::log_sigmoid(logit));
          double g = (losses::sigmoid(logit) * (y.first + y.second) - y.second) / n;
          d_out.row(0).segment(s1, len1).array() = g;
          d_out.row(0).segment(s0, len0).array() = -g;
        }
        return total / n;
      },
      grad);
}

/// Ensemble-mean P[b > a] for each pool pair, one batched forward per member.
std::vector<double> pool_probabilities(const RewardEnsemble& ens,
                                       const std::vector<std::pair<MatrixXd, MatrixXd>>& pool) {
  PairBatch all;
  for (const auto& [a, b] : pool) all.add(whole(a), whole(b), Preference{});
  std::vector<std::array<Index, 4>> spans;
  MatrixXd in = stack(all, spans);
  std::vector<double> p(pool.size(), 0.0);
  for (std::size_t m = 0; m < ens.size(); ++m) {
    MatrixXd r = ens.member(m).forward(in);
    for (std::size_t k = 0; k < spans.size(); ++k) {
      auto [s0, len0, s1, len1] = spans[k];
      p[k] += bt_probability(r.row(0).segment(s0, len0).sum(), r.row(0).segment(s1, len1).sum());
    }
  }
  for (auto& v : p) v /= static_cast<double>(ens.size());
  return p;
}

}  // namespace

PoolSampler buffer_pool(const ReplayBuffer& buffer, const RewardEnsemble& ens, std::size_t window) {
  auto encoded = std::make_shared<MatrixXd>(ens.input_dim(), static_cast<Index>(buffer.size()));
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const auto& t = buffer.at(i);
    encoded->col(static_cast<Index>(i)) = ens.encode(t.state, t.action);
  }
  // (first column, length) of each eligible trajectory, relative to the buffer start
  auto spans = std::make_shared<std::vector<std::pair<Index, Index>>>();
  const std::size_t base = buffer.trajectories().empty() ? 0 : buffer.trajectories().front().begin;
  for (auto i : buffer.eligible(window)) {
    const auto& rec = buffer.trajectories()[i];
    spans->emplace_back(static_cast<Index>(rec.begin - base), static_cast<Index>(rec.length));
  }
  if (spans->size() < 2) throw NoEligibleTrajectory();
  const auto w = static_cast<Index>(window);
  return [encoded, spans, w](Rng& rng) {
    std::size_t i = uniform_index(rng, spans->size());
    std::size_t j = i;
    while (j == i) j = uniform_index(rng, spans->size());
    auto pick = [&](std::pair<Index, Index> span) {
      auto off = static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(span.second - w + 1)));
      return MatrixXd(encoded->middleCols(span.first + off, w));
    };
    MatrixXd a = pick((*spans)[i]);
    MatrixXd b = pick((*spans)[j]);
    return std::make_pair(std::move(a), std::move(b));
  };
}

std::vector<std::vector<double>> train_ensemble(RewardEnsemble& ens, const PreferenceDataset& data,
                                                const TrainOptions& options, const PoolSampler& pool,
                                                std::uint64_t seed) {
  if (data.empty()) throw Error("reward training needs at least one labeled triple");
  const std::size_t members = ens.size();
  const auto batch_size = static_cast<std::size_t>(std::max(1, options.batch_size));
  const bool surf = options.surf.has_value();

  std::vector<EncodedTriple> encoded;
  encoded.reserve(data.size());
  for (const auto& tr : data.labeled) {
    EncodedTriple e;
    e.seg0 = ens.encode(tr.query.seg0.transitions);
    e.seg1 = ens.encode(tr.query.seg1.transitions);
    if (surf) {
      e.wide0 = tr.query.wide0 ? ens.encode(tr.query.wide0->transitions) : e.seg0;
      e.wide1 = tr.query.wide1 ? ens.encode(tr.query.wide1->transitions) : e.seg1;
    }
    e.y = tr.y;
    encoded.push_back(std::move(e));
  }

  std::vector<Rng> rngs;
  for (std::size_t m = 0; m < members; ++m) rngs.emplace_back(stream_seed(ens.member_seed(m) ^ seed, "reward.shuffle"));
  Rng shared_rng(stream_seed(seed, "reward.surf"));

  std::vector<std::vector<double>> histories(members);
  std::vector<std::vector<std::size_t>> orders(members, std::vector<std::size_t>(data.size()));
  ParamVector grad;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t m = 0; m < members; ++m) {
      std::iota(orders[m].begin(), orders[m].end(), 0);
      std::shuffle(orders[m].begin(), orders[m].end(), rngs[m]);
    }
    std::vector<double> epoch_loss(members, 0.0);
    int batches = 0;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
      const std::size_t count = std::min(data.size(), start + batch_size) - start;

      std::vector<std::pair<MatrixXd, MatrixXd>> unlabeled;
      PairBatch pseudo;
      if (surf && pool) {
        const auto budget = count * static_cast<std::size_t>(options.surf->mu);
        for (std::size_t k = 0; k < budget; ++k) unlabeled.push_back(pool(shared_rng));
        auto p = pool_probabilities(ens, unlabeled);
        for (std::size_t k = 0; k < unlabeled.size(); ++k) {
          std::optional<Preference> y;
          if (p[k] >= options.surf->threshold)
            y = Preference::prefer_second();
          else if (1.0 - p[k] >= options.surf->threshold)
            y = Preference::prefer_first();
          if (!y) continue;
          auto [a, b] = crop_pieces(unlabeled[k].first, unlabeled[k].second, *options.surf, shared_rng);
          pseudo.add(a, b, *y);
        }
      }

      for (std::size_t m = 0; m < members; ++m) {
        PairBatch batch;
        for (std::size_t k = start; k < start + count; ++k) {
          const auto& e = encoded[orders[m][k]];
          batch.add(whole(e.seg0), whole(e.seg1), e.y);
        }
        if (surf) {
          for (std::size_t k = start; k < start + count; ++k) {
            const auto& e = encoded[orders[m][k]];
            auto [a, b] = crop_pieces(e.wide0, e.wide1, *options.surf, rngs[m]);
            batch.add(a, b, e.y);
          }
          for (std::size_t k = 0; k < pseudo.size(); ++k)
            batch.add(pseudo.pairs[k].first, pseudo.pairs[k].second, pseudo.labels[k]);
        }
        epoch_loss[m] += batch_ce(ens.member(m), batch, grad);
        adam_step(ens.optimizer(m), ens.member(m).params(), grad);
      }
      ++batches;
    }
    for (std::size_t m = 0; m < members; ++m) histories[m].push_back(epoch_loss[m] / batches);
  }
  return histories;
}

std::size_t relabel(ReplayBuffer& buffer, const RewardEnsemble& ens) {
  constexpr std::size_t kChunk = 4096;
  std::vector<Transition> chunk;
  for (std::size_t start = 0; start < buffer.size(); start += kChunk) {
    const auto end = std::min(buffer.size(), start + kChunk);
    MatrixXd in = MatrixXd::Zero(ens.input_dim(), static_cast<Eigen::Index>(end - start));
    for (std::size_t i = start; i < end; ++i) {
      const auto& t = buffer.at(i);
      in.col(static_cast<Eigen::Index>(i - start)) = ens.encode(t.state, t.action);
    }
    Eigen::RowVectorXd r = ens.mean_rewards(in);
    for (std::size_t i = start; i < end; ++i) buffer.at(i).r_hat = r(static_cast<Eigen::Index>(i - start));
  }
  return buffer.size();
}

}  // namespace sepoa
