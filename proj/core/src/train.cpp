#include "adnet/train.hpp"

#include <cmath>
#include <fstream>

#include "adnet/rng.hpp"
#include "json.hpp"

namespace adnet {

TrainOutcome train_model(const EncoderConfig& enc_cfg, const HeadConfig& head_cfg,
                         const TrainSettings& settings, const SamplerConfig& sampler,
                         const TransformSpec& transforms,
                         const std::vector<TrainingVolume>& data) {
  if (settings.iterations < 0) throw ConfigError("train: iterations must be >= 0");
  settings.sgd.validate();
  sampler.validate();
  if (data.empty()) throw DataError("train: no training volumes");

  TrainOutcome out;
  out.model = make_model<float>(enc_cfg, head_cfg, settings.init_seed, true);
  out.log.reserve(size_t(settings.iterations));

  auto params = model_parameters(out.model);
  SgdState<float> state;
  auto rng = make_rng(sampler.seed);
  std::uniform_int_distribution<size_t> pick_volume(0, data.size() - 1);

  for (int iter = 0; iter < settings.iterations; ++iter) {
    // A volume whose supervoxels admit no episode is skipped in favor of
    // the next one; only a fully unusable dataset is an error.
    const size_t base = pick_volume(rng);
    Episode ep;
    bool sampled = false;
    for (size_t k = 0; k < data.size() && !sampled; ++k) {
      const auto& tv = data[(base + k) % data.size()];
      try {
        ep = sample_episode(*tv.image, *tv.supervoxels, tv.id, sampler,
                            transforms, rng);
        sampled = true;
      } catch (const DataError&) {
        if (k + 1 == data.size()) throw;
      }
    }

    Tape<float> tape;
    auto loss = total_loss<float>(tape, ep, enc_cfg, out.model.enc,
                                  out.model.head, settings.toggles,
                                  float(settings.w_fg), float(settings.w_bg));
    const double total = double(loss.total.item());
    if (!std::isfinite(total))
      throw DataError("train: non-finite loss at iteration " +
                      std::to_string(iter));

    for (auto& p : params) p.zero_grad();
    tape.backward(loss.total);
    sgd_step(params, state, settings.sgd, iter);

    TrainLogRecord rec;
    rec.iteration = iter;
    rec.total = total;
    rec.loss_seg = loss.seg;
    rec.loss_thr = loss.thr;
    rec.loss_par = loss.par;
    rec.par_skipped = loss.par_skipped;
    rec.threshold = double(out.model.head.threshold());
    rec.lr = settings.sgd.lr_at(iter);
    out.log.push_back(rec);
  }
  return out;
}

void write_train_log(const std::vector<TrainLogRecord>& log,
                     const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  for (const auto& rec : log) {
    nlohmann::json j;
    j["iteration"] = rec.iteration;
    j["total"] = rec.total;
    j["L_S"] = rec.loss_seg;
    j["L_T"] = rec.loss_thr;
    j["L_PAR"] = rec.loss_par;
    j["par_skipped"] = rec.par_skipped;
    j["T"] = rec.threshold;
    j["lr"] = rec.lr;
    f << j.dump() << "\n";
  }
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace adnet
