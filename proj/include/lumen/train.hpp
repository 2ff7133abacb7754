#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lumen/checkpoint.hpp"
#include "lumen/dataset.hpp"
#include "lumen/optim.hpp"
#include "lumen/tensor.hpp"
#include "lumen/unet.hpp"

// The training loop: per epoch, draw a permutation schedule over the corpus,
// stream freshly augmented pairs for each batch, run forward / MSE /
// backward / Adam. All randomness derives from (seed, epoch, iteration,
// slot), so runs are bit-reproducible and checkpoints can resume mid-stream.

namespace lumen {

struct TrainConfig {
  int epochs = 5000;
  int batch = 8;
  std::uint64_t seed = 0;
  int checkpoint_every = 1;  // epochs; 0 disables periodic checkpoints
  int keep_last = 3;
  int jobs = 1;
  bool fresh_pairs_each_epoch = true;  // false reuses epoch-0 draws
  DatasetConfig data;
  UNetConfig net;
  std::filesystem::path out_dir;
};

struct LossRow {
  std::uint64_t iteration = 0;  // global step, 1-based
  int epoch = 0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<LossRow> history;
  double best_loss = std::numeric_limits<double>::infinity();
  std::filesystem::path best_checkpoint;
};

inline std::string loss_row_csv(const LossRow& r) {
  return strfmt("%llu,%d,%.9g", static_cast<unsigned long long>(r.iteration), r.epoch, r.loss);
}

// One optimizer step on an (x, y) batch; returns the batch MSE.
template <class T>
double train_step(UNet<T>& net, Adam<T>& adam, const Tensor4<T>& x, const Tensor4<T>& y) {
  net.set_mode(Mode::kTrain);
  net.zero_grads();
  Tensor4<T> pred = net.forward(x);
  MseResult<T> mse = mse_loss(pred, y);
  net.backward(mse.grad);
  adam.step(net.params());
  return mse.loss;
}

namespace detail {

template <class T>
void pack_batch(const std::vector<TrainingPair>& pairs, Tensor4<T>& x, Tensor4<T>& y) {
  if (pairs.empty()) throw InvalidArgument("pack_batch: empty batch");
  const int h = pairs[0].input.height, w = pairs[0].input.width;
  x = Tensor4<T>(static_cast<int>(pairs.size()), 3, h, w);
  y = Tensor4<T>(static_cast<int>(pairs.size()), 3, h, w);
  for (std::size_t b = 0; b < pairs.size(); ++b) {
    if (pairs[b].input.height != h || pairs[b].input.width != w)
      throw InvalidArgument("pack_batch: pair dimensions disagree");
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx)
        for (int c = 0; c < 3; ++c) {
          x.at(static_cast<int>(b), c, yy, xx) = static_cast<T>(pairs[b].input.px(xx, yy)[c]);
          y.at(static_cast<int>(b), c, yy, xx) = static_cast<T>(pairs[b].target.px(xx, yy)[c]);
        }
  }
}

struct AdamScalars {
  std::uint64_t step = 0;
  std::uint64_t next_epoch = 0;
  std::uint64_t iteration = 0;
};

template <class T>
void save_train_checkpoint(const std::filesystem::path& path, UNet<T>& net, Adam<T>& adam,
                           const TrainConfig& cfg, int next_epoch, std::uint64_t iteration) {
  std::map<std::string, std::uint64_t> scalars;
  scalars["train.step"] = adam.step_count();
  scalars["train.next_epoch"] = static_cast<std::uint64_t>(next_epoch);
  scalars["train.iteration"] = iteration;
  scalars["train.seed"] = cfg.seed;
  std::vector<std::pair<std::string, CheckpointTensor>> extra;
  auto params = net.params();
  adam.ensure_buffers(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    CheckpointTensor m, v;
    m.dims = {static_cast<int>(params[i].value->size())};
    v.dims = m.dims;
    for (T t : adam.first_moments()[i]) m.values.push_back(static_cast<float>(t));
    for (T t : adam.second_moments()[i]) v.values.push_back(static_cast<float>(t));
    extra.emplace_back("adam.m." + params[i].name, std::move(m));
    extra.emplace_back("adam.v." + params[i].name, std::move(v));
  }
  save_checkpoint(path, net, scalars, extra);
}

template <class T>
AdamScalars load_train_checkpoint(const std::filesystem::path& path, UNet<T>& net,
                                  Adam<T>& adam) {
  Checkpoint ck = load_checkpoint(path);
  restore_net(net, ck);
  auto params = net.params();
  adam.ensure_buffers(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const CheckpointTensor* m = ck.find("adam.m." + params[i].name);
    const CheckpointTensor* v = ck.find("adam.v." + params[i].name);
    if (!m || !v)
      throw IoError(strfmt("checkpoint: missing optimizer state for '%s'",
                           params[i].name.c_str()));
    for (std::size_t k = 0; k < m->values.size(); ++k) {
      adam.first_moments()[i][k] = static_cast<T>(m->values[k]);
      adam.second_moments()[i][k] = static_cast<T>(v->values[k]);
    }
  }
  AdamScalars s;
  s.step = ck.scalars.at("train.step");
  s.next_epoch = ck.scalars.at("train.next_epoch");
  s.iteration = ck.scalars.at("train.iteration");
  adam.set_step_count(s.step);
  return s;
}

}  // namespace detail

// Streams pairs for one batch. Slot seeds are preassigned, so --jobs > 1
// changes wall time only, never the generated bytes.
inline std::vector<TrainingPair> stream_batch(const std::vector<HdrImage>& corpus,
                                              const std::vector<std::size_t>& indices,
                                              std::uint64_t seed, int epoch_for_seed,
                                              std::size_t iter, const DatasetConfig& cfg,
                                              int jobs) {
  std::vector<TrainingPair> pairs(indices.size());
  auto make_one = [&](std::size_t slot) {
    Rng rng(derive_seed(seed, {seed_tag::kTrainPair,
                               static_cast<std::uint64_t>(epoch_for_seed), iter, slot}));
    pairs[slot] = make_pair(corpus[indices[slot]], rng, cfg);
    pairs[slot].prov.source_index = indices[slot];
  };
  if (jobs <= 1) {
    for (std::size_t s = 0; s < indices.size(); ++s) make_one(s);
  } else {
    std::vector<std::future<void>> tasks;
    for (std::size_t s = 0; s < indices.size(); ++s)
      tasks.push_back(std::async(std::launch::async, make_one, s));
    for (auto& t : tasks) t.get();
  }
  return pairs;
}

template <class T>
TrainResult train(UNet<T>& net, const std::vector<HdrImage>& corpus, const TrainConfig& cfg,
                  Adam<T>& adam, const std::filesystem::path& resume = {},
                  std::ostream* log = nullptr) {
  if (corpus.empty()) throw InvalidArgument("train: empty corpus");
  if (cfg.epochs < 1 || cfg.batch < 1) throw InvalidArgument("train: epochs/batch must be >= 1");
  if (static_cast<std::size_t>(cfg.batch) > corpus.size())
    throw InvalidArgument(strfmt("train: batch %d exceeds corpus size %zu", cfg.batch,
                                 corpus.size()));

  int start_epoch = 0;
  std::uint64_t iteration = 0;
  if (!resume.empty()) {
    detail::AdamScalars s = detail::load_train_checkpoint(resume, net, adam);
    start_epoch = static_cast<int>(s.next_epoch);
    iteration = s.iteration;
  }

  bool writes = !cfg.out_dir.empty();
  if (writes) std::filesystem::create_directories(cfg.out_dir);
  std::ofstream loss_csv;
  if (writes) {
    loss_csv.open(cfg.out_dir / "loss.csv", start_epoch == 0 ? std::ios::trunc : std::ios::app);
    if (start_epoch == 0) loss_csv << "iteration,epoch,loss\n";
  }

  TrainResult result;
  std::vector<std::filesystem::path> recent;
  double best_epoch_loss = std::numeric_limits<double>::infinity();
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    Rng sched_rng(derive_seed(cfg.seed, {seed_tag::kEpoch, static_cast<std::uint64_t>(epoch)}));
    EpochSchedule schedule = epoch_schedule(corpus.size(), cfg.batch, sched_rng,
                                            static_cast<std::size_t>(epoch));
    for (std::size_t it = 0; it < schedule.batches.size(); ++it) {
      int epoch_for_seed = cfg.fresh_pairs_each_epoch ? epoch : 0;
      std::vector<TrainingPair> pairs = stream_batch(corpus, schedule.batches[it], cfg.seed,
                                                     epoch_for_seed, it, cfg.data, cfg.jobs);
      Tensor4<T> x, y;
      detail::pack_batch(pairs, x, y);
      double loss = train_step(net, adam, x, y);
      ++iteration;
      LossRow row{iteration, epoch, loss};
      result.history.push_back(row);
      if (writes) loss_csv << loss_row_csv(row) << "\n";
      if (loss < result.best_loss) result.best_loss = loss;
    }
    if (log) *log << "epoch " << epoch << " done, loss " << result.history.back().loss << "\n";
    if (writes && cfg.checkpoint_every > 0 &&
        ((epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == cfg.epochs)) {
      auto path = cfg.out_dir / strfmt("ckpt_epoch%04d.bin", epoch + 1);
      detail::save_train_checkpoint(path, net, adam, cfg, epoch + 1, iteration);
      recent.push_back(path);
      if (result.history.back().loss <= best_epoch_loss) {
        best_epoch_loss = result.history.back().loss;
        std::filesystem::copy_file(path, cfg.out_dir / "ckpt_best.bin",
                                   std::filesystem::copy_options::overwrite_existing);
        result.best_checkpoint = cfg.out_dir / "ckpt_best.bin";
      }
      while (static_cast<int>(recent.size()) > cfg.keep_last) {
        std::error_code ec;
        std::filesystem::remove(recent.front(), ec);
        recent.erase(recent.begin());
      }
    }
  }
  if (writes) loss_csv.flush();
  return result;
}

// Pads an image with symmetric reflection on the right/bottom to the next
// multiple of the network's downsample factor, runs eval-mode inference,
// and crops back to the original size.
template <class T>
LdrImage enhance(UNet<T>& net, const LdrImage& input) {
  validate(input, "enhance");
  const int f = net.config().downsample_factor();
  const int ph = (input.height + f - 1) / f * f;
  const int pw = (input.width + f - 1) / f * f;
  Tensor4<T> x(1, 3, ph, pw);
  for (int y = 0; y < ph; ++y) {
    int sy = y < input.height ? y : 2 * input.height - 2 - y;
    sy = std::clamp(sy, 0, input.height - 1);
    for (int xx = 0; xx < pw; ++xx) {
      int sx = xx < input.width ? xx : 2 * input.width - 2 - xx;
      sx = std::clamp(sx, 0, input.width - 1);
      const float* p = input.px(sx, sy);
      for (int c = 0; c < 3; ++c) x.at(0, c, y, xx) = static_cast<T>(p[c]);
    }
  }
  Mode prev = net.mode();
  net.set_mode(Mode::kEval);
  Tensor4<T> out = net.forward(x);
  net.set_mode(prev);
  LdrImage full = to_ldr_image(out);
  if (ph == input.height && pw == input.width) return full;
  LdrImage cropped(input.width, input.height);
  for (int y = 0; y < input.height; ++y)
    for (int xx = 0; xx < input.width; ++xx) {
      const float* s = full.px(xx, y);
      float* d = cropped.px(xx, y);
      d[0] = s[0];
      d[1] = s[1];
      d[2] = s[2];
    }
  return cropped;
}

}  // namespace lumen
