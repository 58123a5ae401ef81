// Command-line entry point: synth, train, eval, infer, ablate, dump-iters, dump-latents, serve.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include "deeperaser/deeperaser.hpp"
#include "deeperaser/serve.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using namespace deeperaser;

namespace {

/// Bad flag combinations or values detected after parsing; exits with code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataSource {
  std::string dir;
  int synth_count = 0;
  int dilate = 0;
};

void add_data_flags(CLI::App* cmd, DataSource& src, bool allow_synth) {
  cmd->add_option("--data", src.dir, "Dataset directory (images/, gts/, anns/ or masks/)");
  if (allow_synth) cmd->add_option("--synth", src.synth_count, "Generate N synthetic triplets instead of --data");
  cmd->add_option("--dilate", src.dilate, "Mask dilation radius in pixels applied on load")->check(CLI::NonNegativeNumber);
}

std::vector<Triplet> load_data(const DataSource& src, std::uint64_t seed, double alpha) {
  if (src.dir.empty() == (src.synth_count <= 0)) throw UsageError("give exactly one of --data or --synth");
  std::vector<Triplet> data;
  if (!src.dir.empty()) {
    data = load_dataset_dir(src.dir, LoadOptions{src.dilate});
  } else {
    data = synth_dataset(src.synth_count, seed, alpha);
    for (auto& t : data) t.mask = dilate(t.mask, src.dilate);
  }
  if (data.empty()) throw std::invalid_argument("dataset is empty");
  return data;
}

TrainConfig build_config(const std::string& config_path, const std::vector<std::string>& overrides,
                         std::uint64_t seed) {
  TrainConfig c;
  if (!config_path.empty()) c = load_train_config(config_path);
  c.seed = seed;
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    try {
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  c.validate();
  return c;
}

struct MaskSource {
  std::string mask;
  std::string strokes;
};

void add_input_flags(CLI::App* cmd, std::string& image, MaskSource& ms, std::string& checkpoint) {
  cmd->add_option("--image", image, "Input RGB PNG")->required();
  cmd->add_option("--mask", ms.mask, "Mask PNG, 8-bit single channel with values 0/255");
  cmd->add_option("--strokes", ms.strokes, "StrokeSet JSON file (alternative to --mask)");
  cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
}

Mask load_mask(const MaskSource& ms, const Image8& image) {
  if (ms.mask.empty() == ms.strokes.empty()) throw UsageError("give exactly one of --mask or --strokes");
  Mask m;
  if (!ms.mask.empty()) {
    m = read_mask_png(ms.mask);
  } else {
    const StrokeSet s = strokes_from_json(nlohmann::json::parse(read_file(ms.strokes)));
    m = rasterize_strokes(s, image.width, image.height);
  }
  if (m.height != image.height || m.width != image.width) {
    throw std::invalid_argument((ms.mask.empty() ? ms.strokes : ms.mask) + ": mask size " + std::to_string(m.width) +
                                "x" + std::to_string(m.height) + " != image size " + std::to_string(image.width) + "x" +
                                std::to_string(image.height));
  }
  return m;
}

int resolve_iters(const Weights<float>& w, int requested) {
  const int iters = requested > 0 ? requested : w.config.iterations;
  if (w.config.erasing_module && !w.config.share_weights && iters > w.config.iterations) {
    throw UsageError("this model has unshared weights for " + std::to_string(w.config.iterations) + " iterations");
  }
  return iters;
}

void seed_flag(CLI::App* cmd, std::uint64_t& seed) {
  cmd->add_option("--seed", seed, "Random seed (all randomness derives from it)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DeepEraser: iterative text removal with a recurrent erasing module"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset directory");
  std::string synth_out, textures_dir;
  int synth_count = 16;
  SynthOptions synth_opts;
  synth->add_option("--out", synth_out, "Output dataset directory")->required();
  synth->add_option("--count", synth_count, "Number of samples")->check(CLI::PositiveNumber);
  synth->add_option("--height", synth_opts.height, "Image height")->check(CLI::PositiveNumber);
  synth->add_option("--width", synth_opts.width, "Image width")->check(CLI::PositiveNumber);
  synth->add_option("--min-instances", synth_opts.min_instances, "Minimum text instances per image");
  synth->add_option("--max-instances", synth_opts.max_instances, "Maximum text instances per image");
  synth->add_option("--textures", textures_dir, "Directory of PNG textures used as backgrounds");
  seed_flag(synth, seed);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  DataSource train_src;
  std::string config_path, out_ckpt, log_path, init_ckpt;
  std::vector<std::string> overrides;
  add_data_flags(train_cmd, train_src, true);
  train_cmd->add_option("--config", config_path, "Config file of key = value lines");
  train_cmd->add_option("--set", overrides, "Override one config key (key=value), repeatable");
  train_cmd->add_option("--out", out_ckpt, "Output checkpoint path")->required();
  train_cmd->add_option("--log", log_path, "Write per-step losses as JSON lines");
  train_cmd->add_option("--init", init_ckpt, "Start from this checkpoint instead of a fresh init");
  seed_flag(train_cmd, seed);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint or a directory of predictions");
  DataSource eval_src;
  std::string eval_ckpt, pred_dir, protocol_name = "raw";
  int eval_iters = 0;
  bool zero_mask = false;
  add_data_flags(eval_cmd, eval_src, false);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Model checkpoint to evaluate");
  eval_cmd->add_option("--pred-dir", pred_dir, "Directory of <id>.png predictions to score instead");
  eval_cmd->add_option("--protocol", protocol_name, "raw or composited")->check(CLI::IsMember({"raw", "composited"}));
  eval_cmd->add_option("--iters", eval_iters, "Inference iterations (default: trained K)");
  eval_cmd->add_flag("--zero-mask", zero_mask, "Feed an all-zero mask (models trained without masks)");
  seed_flag(eval_cmd, seed);

  // infer
  auto* infer = app.add_subcommand("infer", "Erase the masked text in one image");
  std::string infer_image, infer_ckpt, infer_out, dump_dir;
  MaskSource infer_mask;
  int infer_iters = 0, dump_every = 0;
  bool infer_raw = false;
  add_input_flags(infer, infer_image, infer_mask, infer_ckpt);
  infer->add_option("--out", infer_out, "Output PNG")->required();
  infer->add_option("--iters", infer_iters, "Inference iterations (default: trained K)");
  infer->add_option("--dump-every", dump_every, "Also write every N-th intermediate prediction")
      ->check(CLI::PositiveNumber);
  infer->add_option("--dump-dir", dump_dir, "Directory for --dump-every frames (default: next to --out)");
  infer->add_flag("--raw", infer_raw, "Skip compositing the prediction back into the unmasked pixels");
  seed_flag(infer, seed);

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train and score ablation variants, appending table rows");
  DataSource abl_src;
  std::string abl_eval_dir, abl_config, abl_table, abl_protocol = "raw";
  std::vector<std::string> variants, abl_overrides;
  bool list_variants = false;
  add_data_flags(ablate, abl_src, true);
  ablate->add_option("--variant", variants, "Variant name, repeatable (see --list)");
  ablate->add_flag("--list", list_variants, "Print valid variant names and exit");
  ablate->add_option("--config", abl_config, "Base config file");
  ablate->add_option("--set", abl_overrides, "Override one config key (key=value), repeatable");
  ablate->add_option("--eval-data", abl_eval_dir, "Evaluation dataset directory (default: the training set)");
  ablate->add_option("--protocol", abl_protocol, "raw or composited")->check(CLI::IsMember({"raw", "composited"}));
  ablate->add_option("--out-table", abl_table, "Cumulative CSV results table to append to");
  seed_flag(ablate, seed);

  // dump-iters / dump-latents
  auto* dump_iters = app.add_subcommand("dump-iters", "Write the prediction of every iteration");
  auto* dump_latents = app.add_subcommand("dump-latents", "Write a latent-magnitude heatmap per iteration");
  std::string dump_image, dump_ckpt, dump_out;
  MaskSource dump_mask;
  int dump_iters_n = 0;
  for (auto* cmd : {dump_iters, dump_latents}) {
    add_input_flags(cmd, dump_image, dump_mask, dump_ckpt);
    cmd->add_option("--out-dir", dump_out, "Output directory")->required();
    cmd->add_option("--iters", dump_iters_n, "Iterations (default: trained K)");
    seed_flag(cmd, seed);
  }

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP erase service");
  std::string serve_ckpt;
  ServeOptions serve_opts;
  serve->add_option("--checkpoint", serve_ckpt, "Model checkpoint")->envname("DEEPERASER_CHECKPOINT")->required();
  serve->add_option("--port", serve_opts.port, "Listen port")->envname("DEEPERASER_PORT");
  serve->add_option("--host", serve_opts.host, "Listen address");
  serve->add_option("--max-side", serve_opts.max_width, "Largest accepted image width and height");
  serve->add_option("--cors-origin", serve_opts.cors_origin, "Access-Control-Allow-Origin value");
  seed_flag(serve, seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*synth) {
      SceneGenerator gen(seed, synth_opts);
      if (!textures_dir.empty()) {
        std::vector<Image8> textures;
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(textures_dir))
          if (e.path().extension() == ".png") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) textures.push_back(read_png(f, 3));
        if (textures.empty()) throw std::invalid_argument("no PNG textures in '" + textures_dir + "'");
        gen.set_textures(std::move(textures));
      }
      for (int i = 0; i < synth_count; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "synth_%04d", i);
        write_dataset_sample(synth_out, id, gen.generate());
      }
      std::cout << "wrote " << synth_count << " samples to " << synth_out << "\n";
      return 0;
    }

    if (*train_cmd) {
      const TrainConfig cfg = build_config(config_path, overrides, seed);
      const auto data = load_data(train_src, seed, cfg.alpha);
      Weights<float> w = init_ckpt.empty() ? init_model<float>(cfg.model_config(), seed)
                                           : load_checkpoint<float>(init_ckpt).weights;
      if (!init_ckpt.empty() && !(w.config == cfg.model_config())) {
        throw std::invalid_argument("--init checkpoint architecture differs from the config");
      }
      std::ofstream log;
      if (!log_path.empty()) {
        log.open(log_path);
        if (!log) throw std::runtime_error("cannot open log '" + log_path + "'");
      }
      const long total = Trainer<float>::steps_per_epoch(data.size(), cfg.batch_size) * cfg.epochs;
      std::cerr << "training " << count_parameters(w, ParamScope::all) << " parameters on " << data.size()
                << " samples for " << total << " steps\n";
      const auto result = train<float>(std::move(w), data, cfg, [&](const LossReport& r) {
        if (log) log << loss_record(r) << '\n';
        if ((r.step + 1) % 50 == 0 || r.step + 1 == total) {
          std::cerr << "step " << r.step + 1 << "/" << total << " loss " << r.total << " lr " << r.lr << "\n";
        }
      });
      save_checkpoint(out_ckpt, result.weights);
      std::cout << "saved " << out_ckpt << "\n";
      return 0;
    }

    if (*eval_cmd) {
      if (eval_ckpt.empty() == pred_dir.empty()) throw UsageError("give exactly one of --checkpoint or --pred-dir");
      const auto data = load_data(eval_src, seed, 0.4);
      const Protocol protocol = parse_protocol(protocol_name);
      MetricReport report;
      if (!pred_dir.empty()) {
        report = evaluate_prediction_dir(pred_dir, data, protocol);
      } else {
        const auto w = load_checkpoint<float>(eval_ckpt).weights;
        EvalOptions eo;
        eo.iterations = resolve_iters(w, eval_iters);
        eo.protocol = protocol;
        eo.zero_mask_input = zero_mask;
        report = evaluate_model(w, data, eo);
      }
      std::cout << report.to_text() << MetricReport::table_header() << "\n" << report.table_row() << "\n";
      return 0;
    }

    if (*infer) {
      const Image8 image = read_png(infer_image, 3);
      const Mask mask = load_mask(infer_mask, image);
      const auto w = load_checkpoint<float>(infer_ckpt).weights;
      const int iters = resolve_iters(w, infer_iters);
      const auto out = forward(w, to_feature_map<float>(image), to_feature_map<float>(mask), iters);
      const Image8 final_image = to_image8(out.predictions.back());
      write_png(infer_out, infer_raw ? final_image : composite_non_text(final_image, image, mask));
      if (dump_every > 0) {
        const fs::path dir = dump_dir.empty() ? fs::path(infer_out).parent_path() : fs::path(dump_dir);
        if (!dir.empty()) fs::create_directories(dir);
        const int n = static_cast<int>(out.predictions.size());
        int written = 0;
        for (int k = dump_every; k <= n; k += dump_every, ++written) {
          write_png(dir / frame_name("iter_", k, n), to_image8(out.predictions[static_cast<std::size_t>(k - 1)]));
        }
        std::cout << "wrote " << written << " frames to " << (dir.empty() ? "." : dir.string()) << "\n";
      }
      std::cout << "wrote " << infer_out << "\n";
      return 0;
    }

    if (*ablate) {
      if (list_variants) {
        for (const auto& n : ablation_names()) std::cout << n << "\n";
        return 0;
      }
      if (variants.empty()) throw UsageError("give at least one --variant (see --list)");
      const TrainConfig base = build_config(abl_config, abl_overrides, seed);
      for (const auto& v : variants) {
        try {
          make_ablation(v, base).config.validate();
        } catch (const std::invalid_argument& e) {
          throw UsageError(e.what());
        }
      }
      const auto train_set = load_data(abl_src, seed, base.alpha);
      const auto eval_set =
          abl_eval_dir.empty() ? train_set : load_dataset_dir(abl_eval_dir, LoadOptions{abl_src.dilate});
      const Protocol protocol = parse_protocol(abl_protocol);
      std::ofstream table;
      if (!abl_table.empty()) {
        const bool fresh = !fs::exists(abl_table) || fs::file_size(abl_table) == 0;
        table.open(abl_table, std::ios::app);
        if (!table) throw std::runtime_error("cannot open table '" + abl_table + "'");
        if (fresh) table << AblationResult::table_header() << "\n";
      }
      std::cout << AblationResult::table_header() << "\n";
      for (const auto& v : variants) {
        const AblationResult r = run_ablation<float>(v, base, train_set, eval_set, protocol);
        std::cout << r.table_row() << std::endl;
        if (table) table << r.table_row() << std::endl;
      }
      return 0;
    }

    if (*dump_iters || *dump_latents) {
      const Image8 image = read_png(dump_image, 3);
      const Mask mask = load_mask(dump_mask, image);
      const auto w = load_checkpoint<float>(dump_ckpt).weights;
      const int iters = resolve_iters(w, dump_iters_n);
      const bool latents = dump_latents->parsed();
      if (latents && !w.config.erasing_module) throw std::invalid_argument("model has no erasing module latents");
      const auto out = forward(w, to_feature_map<float>(image), to_feature_map<float>(mask), iters, latents);
      fs::create_directories(dump_out);
      const auto& maps = latents ? out.latents : out.predictions;
      const int n = static_cast<int>(maps.size());
      for (int k = 1; k <= n; ++k) {
        const auto& m = maps[static_cast<std::size_t>(k - 1)];
        write_png(fs::path(dump_out) / frame_name(latents ? "latent_" : "iter_", k, n),
                  latents ? latent_heatmap(m) : to_image8(m));
      }
      std::cout << "wrote " << n << " images to " << dump_out << "\n";
      return 0;
    }

    if (*serve) {
      serve_opts.max_height = serve_opts.max_width;
      EraseService service(serve_opts);
      httplib::Server server;
      server.set_payload_max_length(serve_opts.max_payload_bytes);
      register_routes(server, service);
      if (!server.bind_to_port(serve_opts.host, serve_opts.port)) {
        throw std::runtime_error("cannot bind " + serve_opts.host + ":" + std::to_string(serve_opts.port));
      }
      std::cerr << "listening on " << serve_opts.host << ":" << serve_opts.port << "\n";
      // requests get 503 until the checkpoint has loaded
      int status = 0;
      std::thread loader([&] {
        try {
          service.load_file(serve_ckpt);
          std::cerr << "loaded " << serve_ckpt << "\n";
        } catch (const std::exception& e) {
          std::cerr << "error: " << e.what() << "\n";
          status = 2;
          // stop() is a no-op until the accept loop runs
          while (!server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(5));
          server.stop();
        }
      });
      server.listen_after_bind();
      loader.join();
      return status;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\nRun with --help for usage.\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
