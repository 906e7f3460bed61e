#include <charconv>
#include <fstream>

#include "jointcast/core/checkpoint.hpp"
#include "jointcast/core/optimizer.hpp"
#include "jointcast/harness/harness.hpp"
#include "jointcast/scene/scene_io.hpp"

namespace jointcast {

namespace {

// Stream tags for derive_seed.
enum : std::uint64_t { kTrainData = 1, kValData = 2, kParams = 3, kShuffle = 4, kDropout = 5 };

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace

DataFiles generate_data(const RunConfig& cfg, const std::filesystem::path& dir) {
  cfg.validate();
  std::filesystem::create_directories(dir);
  DataFiles files{dir / "train.jsonl", dir / "val.jsonl"};
  write_scenes(generate_synthetic_scenes(derive_seed(cfg.seed, kTrainData), static_cast<std::size_t>(cfg.train_scenes),
                                         cfg.generator),
               files.train);
  write_scenes(generate_synthetic_scenes(derive_seed(cfg.seed, kValData), static_cast<std::size_t>(cfg.val_scenes),
                                         cfg.generator),
               files.val);
  return files;
}

std::vector<SceneGeometry> build_geometries(const std::vector<Scene>& scenes, const ModelConfig& cfg) {
  std::vector<SceneGeometry> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(build_scene_geometry(s, cfg));
  return out;
}

ParameterStore<float> init_parameters(const RunConfig& cfg) {
  ParameterStore<float> store(derive_seed(cfg.seed, kParams));
  declare_model_parameters(store, cfg.model);
  return store;
}

template <typename Scalar>
ParameterStore<Scalar> load_model(const RunConfig& cfg, const std::filesystem::path& path) {
  ParameterStore<Scalar> expected;
  declare_model_parameters(expected, cfg.model);
  ParameterStore<Scalar> loaded = load_checkpoint<Scalar>(path);
  require_same_layout(expected, loaded);
  return loaded;
}

std::vector<std::size_t> epoch_order(const RunConfig& cfg, int epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(derive_seed(cfg.seed, kShuffle), static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
  }
  return order;
}

std::uint64_t dropout_seed(const RunConfig& cfg, int epoch, std::size_t index) {
  return derive_seed(derive_seed(derive_seed(cfg.seed, kDropout), static_cast<std::uint64_t>(epoch)), index);
}

template <typename Scalar>
LossBreakdown scene_loss(ParameterStore<Scalar>& store, const SceneGeometry& geom, const ModelConfig& cfg,
                         bool training, std::uint64_t seed, double grad_scale) {
  Tape<Scalar> tape(&store);
  Rng rng(seed);
  Context<Scalar> ctx{&tape, training, training ? cfg.dropout : 0.0, &rng, nullptr};
  ModelOutput<Scalar> out = run_model(ctx, geom, cfg);
  SceneLoss<Scalar> loss = total_loss(out.decoded, out.scores, geom.future_local);
  if (grad_scale != 0.0) tape.backward(loss.total, static_cast<Scalar>(grad_scale));
  return loss.breakdown;
}

std::string train_log_csv(const std::vector<TrainLogRow>& rows) {
  std::string s = "epoch,step,l_propose,l_refine,l_cls,total,lr\n";
  for (const auto& r : rows) {
    s += std::to_string(r.epoch) + ',' + std::to_string(r.step) + ',' + fmt(r.l_propose) + ',' + fmt(r.l_refine) + ',' +
         fmt(r.l_cls) + ',' + fmt(r.total) + ',' + fmt(r.lr) + '\n';
  }
  return s;
}

TrainResult train(const RunConfig& cfg, const std::vector<Scene>& scenes, const std::filesystem::path& dir,
                  const std::function<void(const TrainLogRow&)>& on_row) {
  cfg.validate();
  if (scenes.empty()) throw ValidationError("train: no training scenes");
  const std::vector<SceneGeometry> geoms = build_geometries(scenes, cfg.model);
  for (std::size_t i = 0; i < geoms.size(); ++i) {
    if (!geoms[i].has_future()) throw ValidationError("train: scene '" + scenes[i].scenario_id + "' has no futures");
  }
  std::filesystem::create_directories(dir);
  const auto ckpt = dir / "checkpoint.jckpt";
  const auto log_path = dir / "train_log.csv";
  ParameterStore<float> store = init_parameters(cfg);
  save_checkpoint(store, dir / "checkpoint_init.jckpt");
  save_checkpoint(store, ckpt);

  TrainResult result;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
    const std::vector<std::size_t> order = epoch_order(cfg, epoch, geoms.size());
    double epoch_total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      const double inv = 1.0 / static_cast<double>(e - b);
      TrainLogRow row{epoch, step, 0.0, 0.0, 0.0, 0.0, lr};
      store.zero_grad();
      for (std::size_t i = b; i < e; ++i) {
        const std::size_t idx = order[i];
        LossBreakdown l;
        try {
          l = scene_loss(store, geoms[idx], cfg.model, true, dropout_seed(cfg, epoch, idx), inv);
        } catch (const NumericError& err) {
          write_text(log_path, train_log_csv(result.log));
          throw NumericError("train: epoch " + std::to_string(epoch) + ", scene '" + scenes[idx].scenario_id +
                             "': " + err.what() + " (last good checkpoint kept)");
        }
        row.l_propose += l.l_propose * inv;
        row.l_refine += l.l_refine * inv;
        row.l_cls += l.l_cls * inv;
        row.total += l.total * inv;
      }
      try {
        optimizer_step(store, lr, cfg.weight_decay);
      } catch (const NumericError& err) {
        write_text(log_path, train_log_csv(result.log));
        throw NumericError("train: epoch " + std::to_string(epoch) + ": " + err.what() + " (last good checkpoint kept)");
      }
      epoch_total += row.total * static_cast<double>(e - b);
      result.log.push_back(row);
      if (on_row) on_row(row);
      ++step;
    }
    result.epoch_loss.push_back(epoch_total / static_cast<double>(order.size()));
    save_checkpoint(store, ckpt);
    write_text(log_path, train_log_csv(result.log));
  }
  return result;
}

template ParameterStore<float> load_model<float>(const RunConfig&, const std::filesystem::path&);
template ParameterStore<double> load_model<double>(const RunConfig&, const std::filesystem::path&);
template LossBreakdown scene_loss<float>(ParameterStore<float>&, const SceneGeometry&, const ModelConfig&, bool,
                                         std::uint64_t, double);
template LossBreakdown scene_loss<double>(ParameterStore<double>&, const SceneGeometry&, const ModelConfig&, bool,
                                          std::uint64_t, double);

}  // namespace jointcast
