#include <cmath>
#include <numeric>
#include <sstream>

#include "awada/ops.hpp"
#include "awada/parallel.hpp"
#include "awada/pipeline.hpp"
#include "awada/rng.hpp"

namespace awada {

namespace {

enum Tag : std::uint64_t {
  kTagGst = 0x101,
  kTagGts,
  kTagDs,
  kTagDt,
  kTagSourceOrder,
  kTagTargetOrder,
  kTagCrop,
  kTagProbe,
  kTagSegInit,
  kTagSegOrder,
  kTagDetInit,
  kTagDetOrder,
};

constexpr double kDivergenceLimit = 1e3;

std::vector<int> permutation(int n, std::uint64_t seed) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) std::swap(p[i], p[rng.uniform_int(0, i)]);
  return p;
}

int epoch_pick(std::uint64_t seed, std::uint64_t tag, std::int64_t k, int n) {
  const std::int64_t epoch = k / n;
  return permutation(n, derive_seed(seed, tag, static_cast<std::uint64_t>(epoch)))[k % n];
}

GeneratorConfig generator_config(const AwadaConfig& c) {
  GeneratorConfig g;
  g.instance_norm = c.instance_norm;
  g.row_coordinate = c.row_coordinate;
  return g;
}

void check_finite(double v, const char* what, std::int64_t step) {
  if (!std::isfinite(v)) {
    throw TrainingAborted(std::string(what) + " loss is not finite at step " + std::to_string(step));
  }
  if (v > kDivergenceLimit) {
    throw TrainingAborted(std::string(what) + " loss diverged (" + std::to_string(v) + " > 1e3) at step " +
                          std::to_string(step));
  }
}

Tensor attention_batch(const AttentionCache& cache, const std::vector<int>& index,
                       const std::vector<Rect>& crops, int side, std::vector<Rect>* used) {
  std::vector<AttentionMap> maps;
  maps.reserve(index.size());
  for (std::size_t b = 0; b < index.size(); ++b) {
    maps.push_back(crop_resize(cache.maps[index[b]], crops[b], side, side));
    if (used) used->push_back(crops[b]);
  }
  return attention_tensor(maps);
}

void check_cache(const AttentionCache* cache, const DomainDataset& data, const char* which) {
  if (!cache) return;
  if (cache->ids.size() != data.size()) {
    throw std::runtime_error(std::string(which) + " attention cache holds " + std::to_string(cache->ids.size()) +
                             " maps for " + std::to_string(data.size()) + " images");
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (cache->ids[i] != data.samples[i].id) {
      throw std::runtime_error(std::string(which) + " attention cache/image id mismatch at '" +
                               data.samples[i].id + "' (cache has '" + cache->ids[i] + "')");
    }
  }
}

std::string rects(const std::vector<Rect>& r) {
  std::string s;
  for (std::size_t i = 0; i < r.size(); ++i) {
    s += (i ? ";" : "") + std::to_string(r[i].x) + "," + std::to_string(r[i].y) + "," + std::to_string(r[i].w) +
         "," + std::to_string(r[i].h);
  }
  return s.empty() ? "-" : s;
}

}  // namespace

BatchPlan plan_batch(std::uint64_t seed, std::int64_t step, int batch, int patch, const DomainDataset& source,
                     const DomainDataset& target) {
  if (source.samples.empty() || target.samples.empty()) throw std::invalid_argument("plan_batch: empty dataset");
  BatchPlan plan;
  Rng crop_rng(derive_seed(seed, kTagCrop, static_cast<std::uint64_t>(step)));
  for (int b = 0; b < batch; ++b) {
    const std::int64_t k = step * batch + b;
    const int si = epoch_pick(seed, kTagSourceOrder, k, static_cast<int>(source.size()));
    const int ti = epoch_pick(seed, kTagTargetOrder, k, static_cast<int>(target.size()));
    plan.source_index.push_back(si);
    plan.target_index.push_back(ti);
    auto crop = [&](const Image& img) {
      if (img.width < patch || img.height < patch) {
        throw std::invalid_argument("patch " + std::to_string(patch) + " exceeds image size");
      }
      const int x = crop_rng.uniform_int(0, img.width - patch);
      const int y = crop_rng.uniform_int(0, img.height - patch);
      return Rect{x, y, patch, patch};
    };
    plan.source_crop.push_back(crop(source.samples[si].image));
    plan.target_crop.push_back(crop(target.samples[ti].image));
  }
  return plan;
}

std::string format_step(const StepRecord& r, const DomainDataset& source, const DomainDataset& target) {
  std::ostringstream os;
  os.precision(17);
  os << "step " << r.step << " src=";
  for (std::size_t i = 0; i < r.plan.source_index.size(); ++i) {
    os << (i ? ";" : "") << source.samples[r.plan.source_index[i]].id;
  }
  os << " tgt=";
  for (std::size_t i = 0; i < r.plan.target_index.size(); ++i) {
    os << (i ? ";" : "") << target.samples[r.plan.target_index[i]].id;
  }
  os << " src_crop=" << rects(r.plan.source_crop) << " tgt_crop=" << rects(r.plan.target_crop)
     << " src_attn_crop=" << rects(r.source_attn_crop) << " tgt_attn_crop=" << rects(r.target_attn_crop)
     << " disc=" << r.losses.disc << " gan_st=" << r.losses.gan_st << " gan_ts=" << r.losses.gan_ts
     << " cycle=" << r.losses.cycle << " semantic=" << r.losses.semantic << " total=" << r.losses.total;
  return os.str();
}

struct GanTrainer::Batch {
  Tensor xs, xt;
  Tensor rows_s, rows_t;  // undefined without row coordinates
  Tensor attn_s_disc, attn_t_disc;
  Tensor attn_s_pix, attn_t_pix;
  std::vector<Rect> s_attn_crop, t_attn_crop;
};

GanTrainer::GanTrainer(const AwadaConfig& config, const DomainDataset& source, const DomainDataset& target,
                       const SegmenterNet* segmenter, AwmPlacement placement, Attention attention)
    : config_(config),
      source_(source),
      target_(target),
      segmenter_(segmenter),
      placement_(placement),
      attention_(attention),
      g_st_("g_st", generator_config(config), derive_seed(config.gan_seed, kTagGst)),
      g_ts_("g_ts", generator_config(config), derive_seed(config.gan_seed, kTagGts)),
      d_s_("d_s", derive_seed(config.gan_seed, kTagDs), config.row_coordinate),
      d_t_("d_t", derive_seed(config.gan_seed, kTagDt), config.row_coordinate),
      adam_g_(generator_parameters(), config.gan_adam()),
      adam_d_(discriminator_parameters(), config.gan_adam()) {
  config_.validate();
  const bool weighted = placement.disc || placement.gen || placement.cyc || placement.sem;
  if (weighted && (!attention.source || !attention.target)) {
    throw std::invalid_argument("placement " + placement.label() + " needs source and target attention caches");
  }
  if (config.semantic && !segmenter) throw std::invalid_argument("semantic loss enabled but no segmenter given");
  check_cache(attention.source, source, "source");
  check_cache(attention.target, target, "target");
}

std::vector<Tensor> GanTrainer::generator_parameters() const {
  auto p = g_st_.parameters();
  auto q = g_ts_.parameters();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

std::vector<Tensor> GanTrainer::discriminator_parameters() const {
  auto p = d_s_.parameters();
  auto q = d_t_.parameters();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

GanTrainer::Batch GanTrainer::materialize(const BatchPlan& plan) const {
  Batch b;
  std::vector<const Image*> si, ti;
  for (int i : plan.source_index) si.push_back(&source_.samples[i].image);
  for (int i : plan.target_index) ti.push_back(&target_.samples[i].image);
  b.xs = images_to_tensor(si, plan.source_crop);
  b.xt = images_to_tensor(ti, plan.target_crop);
  if (config_.row_coordinate) {
    b.rows_s = row_coordinates(plan.source_crop, si[0]->height);
    b.rows_t = row_coordinates(plan.target_crop, ti[0]->height);
  }
  const bool adversarial = placement_.disc || placement_.gen;
  const bool pixel = placement_.cyc || placement_.sem;
  if (adversarial) {
    const int side = DiscriminatorNet::output_size(config_.patch);
    b.attn_s_disc = attention_batch(*attention_.source, plan.source_index, plan.source_crop, side, &b.s_attn_crop);
    b.attn_t_disc = attention_batch(*attention_.target, plan.target_index, plan.target_crop, side, &b.t_attn_crop);
  }
  if (pixel) {
    std::vector<Rect>* s_used = adversarial ? nullptr : &b.s_attn_crop;
    std::vector<Rect>* t_used = adversarial ? nullptr : &b.t_attn_crop;
    b.attn_s_pix = attention_batch(*attention_.source, plan.source_index, plan.source_crop, config_.patch, s_used);
    b.attn_t_pix = attention_batch(*attention_.target, plan.target_index, plan.target_crop, config_.patch, t_used);
  }
  return b;
}

Tensor GanTrainer::disc_loss(const Batch& b, const Tensor& fake_t, const Tensor& fake_s, LossValues& v) const {
  const Tensor a_s = placement_.disc ? b.attn_s_disc : Tensor();
  const Tensor a_t = placement_.disc ? b.attn_t_disc : Tensor();
  const bool norm = config_.awm_normalize;
  // D_T separates real target images from translated source images; the
  // real term follows the target attention and the fake term the source
  // attention of the image it was translated from. D_S mirrors this.
  // A translated image keeps the rows of the crop it came from.
  const Tensor lt = gan_loss_discriminator(d_t_.forward(b.xt, b.rows_t), d_t_.forward(fake_t, b.rows_s),
                                           config_.gan_form, a_t, a_s, norm);
  const Tensor ls = gan_loss_discriminator(d_s_.forward(b.xs, b.rows_s), d_s_.forward(fake_s, b.rows_t),
                                           config_.gan_form, a_s, a_t, norm);
  const Tensor total = add(scale(lt, config_.weights.a1), scale(ls, config_.weights.a2));
  v.disc = total.item();
  return total;
}

LossComponents GanTrainer::gen_losses(const Batch& b, const Tensor& fake_t, const Tensor& fake_s) const {
  const bool norm = config_.awm_normalize;
  const Tensor none;
  LossComponents c;
  c.gan_st = gan_loss_generator(d_t_.forward(fake_t, b.rows_s), config_.gan_form,
                                placement_.gen ? b.attn_s_disc : none, norm);
  c.gan_ts = gan_loss_generator(d_s_.forward(fake_s, b.rows_t), config_.gan_form,
                                placement_.gen ? b.attn_t_disc : none, norm);
  c.cycle = cycle_loss(b.xs, g_ts_.forward(fake_t, b.rows_s), b.xt, g_st_.forward(fake_s, b.rows_t),
                       placement_.cyc ? b.attn_s_pix : none, placement_.cyc ? b.attn_t_pix : none, norm);
  if (config_.semantic) {
    c.semantic = semantic_loss(segmenter_->forward(b.xs), segmenter_->forward(fake_t),
                               placement_.sem ? b.attn_s_pix : none, norm);
    if (config_.semantic_bidirectional) {
      c.semantic = add(c.semantic, semantic_loss(segmenter_->forward(b.xt), segmenter_->forward(fake_s),
                                                 placement_.sem ? b.attn_t_pix : none, norm));
    }
  }
  return c;
}

LossValues GanTrainer::step() {
  StepRecord rec;
  rec.step = step_;
  rec.plan = plan_batch(config_.gan_seed, step_, config_.batch, config_.patch, source_, target_);
  const Batch b = materialize(rec.plan);
  rec.source_attn_crop = b.s_attn_crop;
  rec.target_attn_crop = b.t_attn_crop;

  std::vector<Tensor> all = generator_parameters();
  for (auto& p : discriminator_parameters()) all.push_back(p);

  zero_grad(all);
  const Tensor fake_t = g_st_.forward(b.xs, b.rows_s);
  const Tensor fake_s = g_ts_.forward(b.xt, b.rows_t);
  LossValues v;
  const Tensor ld = disc_loss(b, detach(fake_t), detach(fake_s), v);
  check_finite(v.disc, "discriminator", step_);
  ld.backward();
  adam_d_.step();

  zero_grad(all);
  const LossComponents c = gen_losses(b, fake_t, fake_s);
  Tensor total;
  try {
    total = total_loss(c, config_.weights);
  } catch (const std::runtime_error& e) {
    throw TrainingAborted(std::string(e.what()) + " at step " + std::to_string(step_));
  }
  v.gan_st = c.gan_st.item();
  v.gan_ts = c.gan_ts.item();
  v.cycle = c.cycle.item();
  v.semantic = c.semantic.defined() ? c.semantic.item() : 0.0;
  v.total = total.item();
  check_finite(v.total, "generator", step_);
  total.backward();
  adam_g_.step();

  rec.losses = v;
  last_ = std::move(rec);
  ++step_;
  return v;
}

void GanTrainer::train(std::int64_t steps, const std::function<void(const StepRecord&)>& on_step) {
  for (std::int64_t i = 0; i < steps; ++i) {
    step();
    if (on_step) on_step(last_);
  }
}

LossValues GanTrainer::probe() const {
  const BatchPlan plan =
      plan_batch(derive_seed(config_.gan_seed, kTagProbe), 0, config_.batch, config_.patch, source_, target_);
  const Batch b = materialize(plan);
  const Tensor fake_t = g_st_.forward(b.xs, b.rows_s);
  const Tensor fake_s = g_ts_.forward(b.xt, b.rows_t);
  LossValues v;
  disc_loss(b, fake_t, fake_s, v);
  const LossComponents c = gen_losses(b, fake_t, fake_s);
  v.gan_st = c.gan_st.item();
  v.gan_ts = c.gan_ts.item();
  v.cycle = c.cycle.item();
  v.semantic = c.semantic.defined() ? c.semantic.item() : 0.0;
  v.total = total_loss(c, config_.weights).item();
  return v;
}

void GanTrainer::save(Checkpoint& ck) const {
  store_parameters(ck, "param", generator_parameters());
  store_parameters(ck, "param", discriminator_parameters());
  store_optimizer(ck, "adam_g", adam_g_);
  store_optimizer(ck, "adam_d", adam_d_);
  ck.ints["gan/step"] = static_cast<std::uint64_t>(step_);
}

void GanTrainer::restore(const Checkpoint& ck) {
  load_weights(ck);
  restore_optimizer(ck, "adam_g", adam_g_);
  restore_optimizer(ck, "adam_d", adam_d_);
  step_ = static_cast<std::int64_t>(ck.integer("gan/step"));
}

void GanTrainer::load_weights(const Checkpoint& ck) {
  restore_parameters(ck, "param", generator_parameters());
  restore_parameters(ck, "param", discriminator_parameters());
}

SegmenterNet train_segmenter(const DomainDataset& source, const AwadaConfig& config) {
  if (!source.labeled()) throw std::invalid_argument("segmenter training needs labeled source images");
  SegmenterNet net("seg", derive_seed(config.seg_seed, kTagSegInit));
  auto params = net.parameters();
  Adam adam(params, {config.lr_seg, 0.9, 0.999, 1e-8});
  Rng rng(derive_seed(config.seg_seed, kTagSegOrder));
  const int p = config.patch;
  for (int step = 0; step < config.seg_steps; ++step) {
    std::vector<const Image*> imgs;
    std::vector<Rect> crops;
    std::vector<double> mask;
    for (int b = 0; b < config.batch; ++b) {
      const Sample& s = source.samples[rng.uniform_int(0, static_cast<int>(source.size()) - 1)];
      const Rect r{rng.uniform_int(0, s.image.width - p), rng.uniform_int(0, s.image.height - p), p, p};
      imgs.push_back(&s.image);
      crops.push_back(r);
      for (int y = 0; y < p; ++y) {
        for (int x = 0; x < p; ++x) mask.push_back(s.mask.at(r.x + x, r.y + y, 0) ? 1.0 : 0.0);
      }
    }
    std::vector<double> inv(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) inv[i] = 1.0 - mask[i];
    const Shape ms{config.batch, 1, p, p};
    const Tensor probs = net.forward(images_to_tensor(imgs, crops));
    const Tensor ll = add(mul(Tensor::from(ms, mask), log(slice_channels(probs, 1, 2))),
                          mul(Tensor::from(ms, std::move(inv)), log(slice_channels(probs, 0, 1))));
    const Tensor loss = scale(mean(ll), -1.0);
    check_finite(loss.item(), "segmenter", step);
    zero_grad(params);
    loss.backward();
    adam.step();
  }
  net.freeze();
  return net;
}

double segmenter_accuracy(const SegmenterNet& net, const DomainDataset& data) {
  std::size_t correct = 0, total = 0;
  for (const auto& s : data.samples) {
    const Tensor probs = net.forward(image_to_tensor(s.image));
    const int plane = s.image.width * s.image.height;
    const auto v = probs.values();
    for (int i = 0; i < plane; ++i) {
      const bool fg = v[plane + i] > v[i];
      correct += fg == (s.mask.pixels[i] != 0);
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / total : 0.0;
}

ProposalDetector train_detector(const std::string& name, const std::vector<Image>& images,
                                const std::vector<std::vector<Box>>& boxes, std::uint64_t seed, int steps, double lr,
                                int batch) {
  if (images.empty() || images.size() != boxes.size()) {
    throw std::invalid_argument("train_detector: need one label set per image");
  }
  ProposalDetector det(name, derive_seed(seed, kTagDetInit));
  auto params = det.parameters();
  Adam adam(params, {lr, 0.9, 0.999, 1e-8});
  Rng rng(derive_seed(seed, kTagDetOrder));
  for (int step = 0; step < steps; ++step) {
    std::vector<const Image*> imgs;
    std::vector<Rect> crops;
    std::vector<std::vector<Box>> labels;
    for (int b = 0; b < batch; ++b) {
      const int i = rng.uniform_int(0, static_cast<int>(images.size()) - 1);
      imgs.push_back(&images[i]);
      crops.push_back({0, 0, images[i].width, images[i].height});
      labels.push_back(boxes[i]);
    }
    const Tensor loss = det.loss(images_to_tensor(imgs, crops), labels);
    check_finite(loss.item(), "detector", step);
    zero_grad(params);
    loss.backward();
    adam.step();
  }
  return det;
}

std::vector<Image> stylize(const GeneratorNet& g, const DomainDataset& data) {
  std::vector<Image> out(data.size());
  parallel_for(static_cast<int>(data.size()),
               [&](int i) {
                 const Image& img = data.samples[i].image;
                 const Tensor rows = g.uses_rows() ? row_coordinates({{0, 0, img.width, img.height}}, img.height) : Tensor();
                 out[i] = tensor_to_image(g.forward(image_to_tensor(img), rows));
               });
  return out;
}

std::vector<std::vector<Proposal>> detect_all(const ProposalDetector& det, const DomainDataset& data, int max_out) {
  std::vector<std::vector<Proposal>> out(data.size());
  parallel_for(static_cast<int>(data.size()),
               [&](int i) { out[i] = det.detect(image_to_tensor(data.samples[i].image), max_out); });
  return out;
}

}  // namespace awada
