#include "bnlab/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "bnlab/csv.hpp"
#include "bnlab/ops.hpp"

namespace bnlab {

void OptimizerState::init(const std::vector<ParamRef>& params, const TrainabilityMask& mask) {
  velocity.assign(params.size(), Tensor());
  for (size_t i = 0; i < params.size(); ++i)
    if (!mask.fully_frozen(i))
      velocity[i] = Tensor::zeros(params[i].tensor.shape(), params[i].tensor.dtype());
}

double lr_at(long iteration, long iterations_per_epoch, const Hyperparams& hp) {
  const double epoch_pos =
      iterations_per_epoch > 0 ? static_cast<double>(iteration) / iterations_per_epoch : 0.0;
  double lr = hp.base_lr;
  if (hp.warmup_epochs > 0 && epoch_pos < hp.warmup_epochs)
    return hp.base_lr * (epoch_pos / hp.warmup_epochs);
  for (const auto& [epoch, multiplier] : hp.schedule)
    if (epoch_pos >= epoch) lr *= multiplier;
  return lr;
}

namespace {

template <typename T>
void sgd_step_kernel(T* p, const T* g, const uint8_t* bits, T* v, size_t n, double lr,
                     double momentum, double wd) {
  for (size_t i = 0; i < n; ++i) {
    if (!bits[i]) continue;
    T gi = (g ? g[i] : T(0)) + static_cast<T>(wd) * p[i];
    v[i] = static_cast<T>(momentum) * v[i] + gi;
    p[i] -= static_cast<T>(lr) * v[i];
  }
}

}  // namespace

void sgd_step(std::vector<ParamRef>& params, const TrainabilityMask& mask, OptimizerState& state,
              double lr, double momentum, double weight_decay) {
  if (params.size() != mask.bits.size() || params.size() != state.velocity.size())
    throw Error("sgd_step: parameter/mask/state lists misaligned");
  for (size_t i = 0; i < params.size(); ++i) {
    if (!state.velocity[i].defined()) continue;  // fully frozen
    Tensor& t = params[i].tensor;
    const auto& bits = mask.bits[i];
    if (t.dtype() == Dtype::f32)
      sgd_step_kernel(t.data<float>(), t.grad<float>(), bits.data(),
                      state.velocity[i].data<float>(), t.numel(), lr, momentum, weight_decay);
    else
      sgd_step_kernel(t.data<double>(), t.grad<double>(), bits.data(),
                      state.velocity[i].data<double>(), t.numel(), lr, momentum, weight_decay);
  }
}

void augment_flip_crop(float* image, int H, int W, Prng& rng) {
  const bool flip = rng.next_double() < 0.5;
  // Crop offsets in [0, 8]: offset 4 is the identity translation.
  const int pad = 4;
  const int dy = static_cast<int>(rng.next_below(2 * pad + 1));
  const int dx = static_cast<int>(rng.next_below(2 * pad + 1));

  std::vector<float> src(static_cast<size_t>(3) * H * W);
  std::memcpy(src.data(), image, src.size() * sizeof(float));

  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        // Position in the padded source the crop window reads from.
        const int sy = y + dy - pad;
        int sx = x + dx - pad;
        float v = 0.0f;
        if (sy >= 0 && sy < H && sx >= 0 && sx < W) {
          if (flip) sx = W - 1 - sx;
          v = src[(static_cast<size_t>(c) * H + sy) * W + sx];
        }
        image[(static_cast<size_t>(c) * H + y) * W + x] = v;
      }
}

Tensor prepare_batch(const Dataset& data, const std::vector<int>& indices, Dtype dt, bool augment,
                     Prng* aug_rng, std::vector<int>* labels_out) {
  const int B = static_cast<int>(indices.size());
  const int H = data.height(), W = data.width();
  const size_t chw = static_cast<size_t>(3) * H * W;

  Tensor batch = Tensor::zeros({B, 3, H, W}, dt);
  const float* all = data.images.data<float>();
  const float* mean = data.mean_image.defined() ? data.mean_image.data<float>() : nullptr;
  if (labels_out) labels_out->resize(static_cast<size_t>(B));

  std::vector<float> row(chw);
  for (int b = 0; b < B; ++b) {
    const int idx = indices[static_cast<size_t>(b)];
    std::memcpy(row.data(), all + static_cast<size_t>(idx) * chw, chw * sizeof(float));
    if (augment && aug_rng) augment_flip_crop(row.data(), H, W, *aug_rng);
    if (dt == Dtype::f32) {
      float* dst = batch.data<float>() + static_cast<size_t>(b) * chw;
      for (size_t j = 0; j < chw; ++j) dst[j] = row[j] - (mean ? mean[j] : 0.0f);
    } else {
      double* dst = batch.data<double>() + static_cast<size_t>(b) * chw;
      for (size_t j = 0; j < chw; ++j)
        dst[j] = static_cast<double>(row[j]) - (mean ? static_cast<double>(mean[j]) : 0.0);
    }
    if (labels_out) (*labels_out)[static_cast<size_t>(b)] = data.labels[static_cast<size_t>(idx)];
  }
  return batch;
}

std::vector<std::pair<int, int>> batch_ranges(int n, int batch_size) {
  std::vector<std::pair<int, int>> out;
  for (int start = 0; start < n; start += batch_size)
    out.emplace_back(start, std::min(n, start + batch_size));
  if (out.size() >= 2 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

EvalResult evaluate(Network& net, const Dataset& data, int batch_size, int topk) {
  const int K = data.classes;
  if (topk < 1 || topk > K)
    throw UsageError("evaluate: top-" + std::to_string(topk) + " is undefined for " +
                     std::to_string(K) + " classes");
  const BnMode saved = net.mode();
  net.set_mode(BnMode::eval);
  EvalResult res;
  res.n_examples = data.size();
  if (data.size() == 0) {
    net.set_mode(saved);
    return res;
  }
  long hit1 = 0, hit5 = 0;
  std::vector<int> indices;
  std::vector<int> labels;
  for (int start = 0; start < data.size(); start += batch_size) {
    const int end = std::min(data.size(), start + batch_size);
    indices.resize(static_cast<size_t>(end - start));
    std::iota(indices.begin(), indices.end(), start);
    Tensor batch = prepare_batch(data, indices, net.dtype(), false, nullptr, &labels);
    Tensor logits = net.forward(batch);

    for (int b = 0; b < end - start; ++b) {
      // Rank classes by (logit desc, index asc): ties go to the lowest index.
      std::vector<int> order(static_cast<size_t>(K));
      std::iota(order.begin(), order.end(), 0);
      const auto logit = [&](int k) {
        return logits.value_at(static_cast<size_t>(b) * K + static_cast<size_t>(k));
      };
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int c) { return logit(a) > logit(c); });
      const int label = labels[static_cast<size_t>(b)];
      if (order[0] == label) ++hit1;
      for (int k = 0; k < topk; ++k)
        if (order[static_cast<size_t>(k)] == label) {
          ++hit5;
          break;
        }
    }
  }
  res.top1 = static_cast<double>(hit1) / res.n_examples;
  res.top5 = static_cast<double>(hit5) / res.n_examples;
  net.set_mode(saved);
  return res;
}

TrainResult train(Network& net, const TrainabilityMask& mask, const Dataset& train_data,
                  const Dataset& test_data, const Hyperparams& hp, const TrainOptions& opts) {
  if (train_data.size() == 0) throw ConfigError("train: empty dataset");
  auto& params = net.parameters();
  if (params.size() != mask.bits.size()) throw ConfigError("train: mask does not fit network");

  apply_mask_to_requires_grad(net, mask);
  OptimizerState opt;
  opt.init(params, mask);

  Prng data_rng(hp.seed_data);
  Prng aug_rng = Prng(hp.seed_augment).split(RngStream::augmentation);

  TrainResult result;
  const auto ranges = batch_ranges(train_data.size(), hp.batch_size);
  const long iters_per_epoch = static_cast<long>(ranges.size());
  long iteration = 0;

  std::vector<int> order(static_cast<size_t>(train_data.size()));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    net.set_mode(BnMode::train);

    // Per-epoch shuffle from the data-order stream.
    Prng shuffle_rng = data_rng.split(static_cast<uint64_t>(epoch));
    for (size_t i = order.size(); i > 1; --i) {
      const size_t j = shuffle_rng.next_below(i);
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    long loss_count = 0;
    double last_lr = hp.base_lr;
    std::vector<int> batch_idx;
    std::vector<int> labels;
    for (const auto& [start, end] : ranges) {
      batch_idx.assign(order.begin() + start, order.begin() + end);
      Tensor batch =
          prepare_batch(train_data, batch_idx, net.dtype(), opts.augment, &aug_rng, &labels);

      Tape tape;
      Tensor logits = net.forward(batch, &tape);
      Tensor loss = ops::softmax_cross_entropy(logits, labels, &tape);
      const double loss_v = loss.value_at(0);
      if (!std::isfinite(loss_v))
        throw DivergenceError("training diverged: non-finite loss at epoch " +
                                  std::to_string(epoch) + ", iteration " +
                                  std::to_string(iteration),
                              epoch, iteration);
      loss_sum += loss_v;
      ++loss_count;

      for (auto& p : params) p.tensor.zero_grad();
      tape.backward(loss);
      apply_mask(params, mask);

      last_lr = lr_at(iteration, iters_per_epoch, hp);
      sgd_step(params, mask, opt, last_lr, hp.momentum, hp.weight_decay);
      ++iteration;
    }

    EvalResult ev = evaluate(net, test_data, opts.eval_batch_size);
    const auto t1 = std::chrono::steady_clock::now();
    TrainLogRow row;
    row.epoch = epoch;
    row.lr = last_lr;
    row.train_loss = loss_count ? loss_sum / loss_count : 0.0;
    row.top1 = ev.top1;
    row.top5 = ev.top5;
    row.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    result.log.push_back(row);
    result.final_eval = ev;
    if (opts.log_to_stderr)
      std::fprintf(stderr, "epoch %d lr %.5f loss %.4f top1 %.4f top5 %.4f (%.1fs)\n", epoch,
                   row.lr, row.train_loss, row.top1, row.top5, row.wall_seconds);
  }

  if (hp.epochs == 0) result.final_eval = EvalResult{};
  net.set_mode(BnMode::eval);
  return result;
}

std::string metrics_csv(const std::vector<TrainLogRow>& log) {
  CsvTable t({"epoch", "lr", "train_loss", "top1", "top5", "wall_seconds"});
  for (const auto& r : log)
    t.add_row({std::to_string(r.epoch), fmt_g6(r.lr), fmt_g6(r.train_loss), fmt_g6(r.top1),
               fmt_g6(r.top5), fmt_g6(r.wall_seconds)});
  return t.to_string();
}

ReplicateStats aggregate_replicates(const std::vector<EvalResult>& results) {
  ReplicateStats s;
  s.per_replicate = results;
  const size_t n = results.size();
  if (n == 0) return s;
  for (const auto& r : results) {
    s.mean_top1 += r.top1;
    s.mean_top5 += r.top5;
  }
  s.mean_top1 /= static_cast<double>(n);
  s.mean_top5 /= static_cast<double>(n);
  // Identical replicates mean exactly zero spread; avoid the rounding dust
  // a deviations-from-mean pass would leave behind.
  bool all_equal = true;
  for (const auto& r : results)
    all_equal &= r.top1 == results[0].top1 && r.top5 == results[0].top5;
  if (n > 1 && !all_equal) {
    double v1 = 0, v5 = 0;
    for (const auto& r : results) {
      v1 += (r.top1 - s.mean_top1) * (r.top1 - s.mean_top1);
      v5 += (r.top5 - s.mean_top5) * (r.top5 - s.mean_top5);
    }
    s.std_top1 = std::sqrt(v1 / static_cast<double>(n - 1));
    s.std_top5 = std::sqrt(v5 / static_cast<double>(n - 1));
  }
  if (all_equal) s.mean_top1 = results[0].top1;
  if (all_equal) s.mean_top5 = results[0].top5;
  return s;
}

}  // namespace bnlab
