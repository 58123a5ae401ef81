#include "deeperaser/deeperaser.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <limits>
#include <random>
#include <sstream>

using namespace deeperaser;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.K = 2;
  c.crop = 32;
  c.batch_size = 2;
  c.base_lr = 2e-3;
  c.latent_channels = 6;
  c.backbone_width = 6;
  c.num_residual_blocks = 1;
  c.head_hidden = 8;
  c.extractor_mid = 4;
  c.extractor_out = 4;
  return c;
}

// Weighted L1 objective over a whole dataset, deterministic (no crops, no shuffling).
double dataset_loss(const Weights<float>& w, const std::vector<Triplet>& data, const TrainConfig& c) {
  double total = 0;
  for (const auto& t : data) {
    const auto out = forward(w, to_feature_map<float>(t.image), to_feature_map<float>(t.mask), c.K);
    total += weighted_l1_loss(out.predictions, to_feature_map<float>(t.gt), c.lambda).total;
  }
  return total / static_cast<double>(data.size());
}

std::vector<Triplet> small_set(int n, int size = 32) {
  SynthOptions o;
  o.height = size;
  o.width = size;
  o.font_px = {8, 10};
  o.min_instances = 1;
  o.max_instances = 3;
  return synth_dataset(n, 11, 0.4, o, true);
}

}  // namespace

TEST(TrainConfigFile, ParsesKeysCommentsAndBlankLines) {
  std::istringstream in("# toy run\nbase_lr = 3e-4\n\nK=4   # iterations\nsupervise = final_only\n"
                        "mask_mode = all\nshare_weights = false\nseed = 42\n");
  const TrainConfig c = parse_train_config(in);
  EXPECT_DOUBLE_EQ(c.base_lr, 3e-4);
  EXPECT_EQ(c.K, 4);
  EXPECT_EQ(c.supervise, Supervision::final_only);
  EXPECT_EQ(c.mask_mode, MaskMode::all);
  EXPECT_FALSE(c.share_weights);
  EXPECT_EQ(c.seed, 42u);
  // defaults survive for keys that were not given
  EXPECT_DOUBLE_EQ(c.lambda, 0.85);
  EXPECT_EQ(c.latent_channels, 64);
}

TEST(TrainConfigFile, TextRoundTrip) {
  TrainConfig c = tiny_config();
  c.alpha = 0.25;
  c.predict = Prediction::direct;
  std::istringstream in(c.to_text());
  const TrainConfig back = parse_train_config(in);
  EXPECT_EQ(back.to_text(), c.to_text());
}

TEST(TrainConfigFile, UnknownKeyAndBadValuesAreRejected) {
  std::istringstream unknown("learning_rate = 1\n");
  try {
    parse_train_config(unknown);
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  }
  std::istringstream no_eq("K 4\n");
  EXPECT_THROW(parse_train_config(no_eq), std::invalid_argument);
  TrainConfig c;
  EXPECT_THROW(c.set("K", "many"), std::invalid_argument);
  EXPECT_THROW(c.set("mask_mode", "some"), std::invalid_argument);
  c.lambda = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(load_train_config("/nonexistent/train.cfg"), std::invalid_argument);
}

TEST(CropSampler, WindowInsideImageAndCoversMaskPixel) {
  std::mt19937_64 rng(3);
  Mask m(40, 50);
  m.at(37, 2) = 1;
  for (int i = 0; i < 200; ++i) {
    const CropWindow w = sample_crop(m, 16, rng);
    EXPECT_GE(w.y, 0);
    EXPECT_GE(w.x, 0);
    EXPECT_LE(w.y + 16, 40);
    EXPECT_LE(w.x + 16, 50);
    EXPECT_EQ(crop_mask(m, w).popcount(), 1u);
  }
  const CropWindow any = sample_crop(Mask(20, 20), 20, rng);
  EXPECT_EQ(any.y, 0);
  EXPECT_EQ(any.x, 0);
  EXPECT_THROW(sample_crop(Mask(10, 30), 16, rng), std::invalid_argument);
}

TEST(PrepareSample, MaskModes) {
  const auto data = small_set(1);
  const Triplet& t = data[0];
  const PreparedSample part = prepare_sample(t, MaskMode::part, 0.4, false, 1);
  EXPECT_EQ(part.mask, t.mask);
  EXPECT_EQ(part.gt, t.gt);
  const PreparedSample all = prepare_sample(t, MaskMode::all, 0.4, false, 1);
  EXPECT_EQ(all.mask, rasterize_mask(t.instances, 32, 32));
  EXPECT_EQ(all.gt, *t.gt_all_removed);
  const PreparedSample none = prepare_sample(t, MaskMode::none, 0.4, false, 1);
  EXPECT_TRUE(none.input_mask.empty_mask());
  EXPECT_EQ(none.gt, *t.gt_all_removed);
  // resampling draws a fresh selection that is still consistent with the scene
  const PreparedSample re = prepare_sample(t, MaskMode::part, 0.4, true, 77);
  EXPECT_EQ(re.gt, compose_partial_gt(t.image, *t.gt_all_removed, re.mask));
}

TEST(Training, ZeroEpochsLeavesWeightsUnchanged) {
  TrainConfig c = tiny_config();
  c.epochs = 0;
  const auto w = init_model<float>(c.model_config(), 1);
  const auto r = train<float>(w, small_set(2), c);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(serialize_checkpoint(r.weights), serialize_checkpoint(w));
}

TEST(Training, LossDecreasesOnTinySet) {
  TrainConfig c = tiny_config();
  c.epochs = 60;
  c.base_lr = 1e-2;
  c.resample_masks = false;
  const auto data = small_set(4);
  const auto init = init_model<float>(c.model_config(), 2);
  const auto r = train<float>(init, data, c);
  ASSERT_EQ(r.log.size(), 120u);
  for (const auto& rep : r.log) EXPECT_EQ(rep.per_iteration.size(), 2u);
  EXPECT_EQ(r.log.back().step, 119);
  // judged on the whole training set so batch noise does not matter
  const double before = dataset_loss(init, data, c), after = dataset_loss(r.weights, data, c);
  EXPECT_LT(after, 0.9 * before) << before << " -> " << after;
}

TEST(Training, DeterministicForFixedSeed) {
  TrainConfig c = tiny_config();
  c.epochs = 2;
  const auto data = small_set(3);
  const auto a = train<float>(init_model<float>(c.model_config(), 5), data, c);
  const auto b = train<float>(init_model<float>(c.model_config(), 5), data, c);
  EXPECT_EQ(serialize_checkpoint(a.weights), serialize_checkpoint(b.weights));
}

TEST(Training, NonFiniteLossAbortsWithContext) {
  TrainConfig c = tiny_config();
  c.epochs = 1;
  auto w = init_model<float>(c.model_config(), 1);
  w.backbone.stem.bias[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    train<float>(w, small_set(2), c);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("step 0"), std::string::npos) << what;
    EXPECT_NE(what.find("lr"), std::string::npos) << what;
  }
}

TEST(Training, EmptyDatasetThrows) {
  TrainConfig c = tiny_config();
  EXPECT_THROW(train<float>(init_model<float>(c.model_config(), 1), {}, c), std::invalid_argument);
  EvalOptions eo;
  EXPECT_THROW(evaluate_model(init_model<float>(c.model_config(), 1), {}, eo), std::invalid_argument);
}

TEST(LossRecord, IsOneJsonLine) {
  LossReport r;
  r.step = 7;
  r.lr = 1e-4;
  r.total = 0.5;
  r.per_iteration = {0.3, 0.2};
  const std::string line = loss_record(r);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j.at("step").get<long>(), 7);
  EXPECT_EQ(j.at("per_iteration").size(), 2u);
}

TEST(Evaluation, CompositedProtocolMatchesManualComposite) {
  TrainConfig c = tiny_config();
  const auto w = init_model<float>(c.model_config(), 8);
  const auto data = small_set(3);
  EvalOptions raw;
  raw.iterations = 2;
  EvalOptions comp = raw;
  comp.protocol = Protocol::composited;
  std::vector<MetricReport> manual;
  for (const auto& t : data) {
    const auto frames = predict_iterations(w, t, 2, false);
    ASSERT_EQ(frames.size(), 2u);
    const Image8 out = composite_non_text(frames.back(), t.image, t.mask);
    manual.push_back(image_metrics(out, t.gt));
    // outside the mask the composited output equals the input byte for byte
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (!t.mask.at(y, x)) {
          for (int ch = 0; ch < 3; ++ch) ASSERT_EQ(out.at(y, x, ch), t.image.at(y, x, ch));
        }
  }
  EXPECT_DOUBLE_EQ(evaluate_model(w, data, comp).psnr, average_reports(manual).psnr);
  EXPECT_EQ(psnr_per_iteration(w, data, 2).size(), 2u);
  EXPECT_EQ(parse_protocol("composited"), Protocol::composited);
  EXPECT_THROW(parse_protocol("blend"), std::invalid_argument);
}

TEST(Evaluation, PredictionDirectory) {
  const auto data = small_set(2);
  const fs::path dir = fs::temp_directory_path() / ("deeperaser_pred_" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  write_png(dir / (data[0].id + ".png"), data[0].gt);
  EXPECT_THROW(evaluate_prediction_dir(dir, data, Protocol::raw), DatasetError);
  write_png(dir / (data[1].id + ".png"), data[1].gt);
  const MetricReport perfect = evaluate_prediction_dir(dir, data, Protocol::raw);
  EXPECT_TRUE(std::isinf(perfect.psnr));
  EXPECT_NEAR(perfect.mssim, 100.0, 1e-9);
  write_png(dir / (data[1].id + ".png"), Image8(8, 8, 3));
  try {
    evaluate_prediction_dir(dir, data, Protocol::raw);
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.sample_id(), data[1].id);
  }
  fs::remove_all(dir);
}

TEST(Ablation, NamesAndVariants) {
  const TrainConfig base = tiny_config();
  for (const std::string& name : ablation_names()) {
    if (name.find('<') != std::string::npos) continue;
    EXPECT_NO_THROW(make_ablation(name, base).config.validate()) << name;
  }
  EXPECT_FALSE(make_ablation("no_erasing_module", base).config.erasing_module);
  EXPECT_FALSE(make_ablation("no_prev_image", base).config.use_prev_image);
  EXPECT_EQ(make_ablation("train_iters_3", base).config.K, 3);
  EXPECT_EQ(make_ablation("infer_iters_16", base).eval_iterations, 16);
  try {
    make_ablation("no_such_variant", base);
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("no_prev_image"), std::string::npos);
  }
  EXPECT_THROW(make_ablation("train_iters_0", base), std::invalid_argument);
  EXPECT_THROW(make_ablation("train_iters_x", base), std::invalid_argument);
}

TEST(Ablation, RunProducesRow) {
  TrainConfig c = tiny_config();
  c.epochs = 1;
  const auto data = small_set(2);
  const AblationResult r = run_ablation<float>("no_context", c, data, data);
  EXPECT_EQ(r.variant, "no_context");
  EXPECT_GT(r.parameters, 0u);
  const std::string row = r.table_row();
  EXPECT_EQ(row.rfind("no_context,", 0), 0u);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 7);
  EXPECT_EQ(AblationResult::table_header(), "Variant,PSNR,MSSIM,MSE,AGE,pEPs,pCEPS,Para.");
}
