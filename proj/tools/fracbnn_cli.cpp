// fracbnn: command-line front end for the packed BNN engine.
//
//   fracbnn encode  --image in.ppm [--resolution 8] --out x.fbtn
//   fracbnn infer   --model m.fbm --image in.ppm [--json] [--threads N]
//   fracbnn verify  [--seed N] [--cases K] [--models M] [--json]
//   fracbnn bench   --model m.fbm [--iters N] [--json]
//   fracbnn stats   --model m.fbm [--sparsity S] [--json]
//   fracbnn gen     --seed N --out m.fbm [--gates calibrated|open|closed]
//   fracbnn image   --seed N --out img.ppm [--kind smooth|random]
//
// Exit codes: 0 success, 1 I/O, 2 format, 3 shape, 4 verification failed.

#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "fracbnn/fracbnn.hpp"
#include "fracbnn/oracle.hpp"
#include "fracbnn/verify.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace fracbnn;

constexpr int kExitIo = 1;
constexpr int kExitFormat = 2;
constexpr int kExitShape = 3;
constexpr int kExitVerify = 4;

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("FRACBNN_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

Image load_ppm(const std::string& path) { return parse_ppm(read_file_bytes(path)); }

json layer_json(const LayerStats& l) {
  json j;
  j["name"] = l.name;
  j["kind"] = to_string(l.kind);
  j["fractional"] = l.fractional;
  j["sparsity"] = l.sparsity();
  j["base_bmacs"] = l.base_bmacs;
  j["update_bmacs"] = l.update_bmacs;
  return j;
}

int cmd_encode(const std::string& image, int resolution, const std::string& out) {
  const Image img = load_ppm(image);
  const PackedBitPlane plane = encode_image_thermometer(img, ThermometerConfig(resolution));
  write_file_bytes(out, write_tensor(plane));
  std::cout << "wrote " << out << ": " << to_string(plane.dims()) << " packed channels\n";
  return 0;
}

int cmd_infer(const std::string& model_path, const std::string& image, bool as_json, int threads) {
  const Model m = load_model_file(model_path);
  const Image img = load_ppm(image);
  const ForwardResult r = forward(network_for(m), m, img, {threads});
  if (as_json) {
    json j;
    j["schema"] = "fracbnn.infer/1";
    j["class"] = r.predicted;
    j["logits"] = r.logits;
    j["mean_sparsity"] = r.stats.mean_sparsity();
    j["effective_bitwidth"] = r.stats.effective_bitwidth();
    j["base_bmacs"] = r.stats.base_bmacs();
    j["update_bmacs"] = r.stats.update_bmacs();
    j["saturations"] = r.stats.saturations;
    json layers = json::array();
    for (const auto& l : r.stats.layers)
      if (is_conv(l.kind)) layers.push_back(layer_json(l));
    j["layers"] = layers;
    std::cout << j.dump() << "\n";
    return 0;
  }
  std::cout << "class " << r.predicted << "\nlogits";
  for (auto v : r.logits) std::cout << ' ' << v;
  std::cout << "\n";
  for (const auto& l : r.stats.layers)
    if (l.fractional)
      std::cout << "  " << std::left << std::setw(22) << l.name << " sparsity " << std::fixed
                << std::setprecision(4) << l.sparsity() << "\n";
  std::cout << "mean sparsity " << std::setprecision(4) << r.stats.mean_sparsity()
            << "\neffective bitwidth " << r.stats.effective_bitwidth() << "\n";
  return 0;
}

int cmd_verify(std::uint64_t seed, std::size_t cases, std::size_t models, bool fault,
               bool as_json, int threads) {
  if (cases == 0) {
    std::cerr << "warning: --cases 0, nothing to verify\n";
    return 0;
  }
  verify::Options opt{seed, cases, threads, fault};
  auto results = verify::run_kernel_checks(opt);
  results.push_back(verify::check_end_to_end(opt, models, std::max<std::size_t>(1, cases / 50)));
  bool all = true;
  for (const auto& r : results) {
    all = all && r.passed();
    if (as_json) {
      json j;
      j["schema"] = "fracbnn.verify/1";
      j["check"] = r.name;
      j["cases"] = r.cases;
      j["failures"] = r.failures;
      j["passed"] = r.passed();
      if (!r.passed()) j["first_failure"] = r.first_failure;
      std::cout << j.dump() << "\n";
    } else {
      std::cout << (r.passed() ? "PASS " : "FAIL ") << std::left << std::setw(18) << r.name
                << r.cases << " cases";
      if (!r.passed()) std::cout << ", " << r.failures << " failed (first: " << r.first_failure << ")";
      std::cout << "\n";
    }
  }
  return all ? 0 : kExitVerify;
}

int cmd_bench(const std::string& model_path, const std::string& image, std::size_t iters,
              bool as_json, int threads) {
  const Model m = load_model_file(model_path);
  const NetworkSpec net = network_for(m);
  const Image img = image.empty() ? smooth_image(net.image_height, net.image_width, 1) : load_ppm(image);
  iters = std::max<std::size_t>(iters, 1);

  std::vector<double> engine_layer(net.blocks.size(), 0.0), oracle_layer(net.blocks.size(), 0.0);
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < iters; ++i) {
    const ForwardResult r = forward(net, m, img, {threads});
    for (std::size_t l = 0; l < r.stats.layers.size(); ++l) engine_layer[l] += r.stats.layers[l].seconds;
  }
  const double engine_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / iters;
  // The dense reference is slow; a few passes are enough for a stable ratio.
  const std::size_t oracle_iters = std::min<std::size_t>(iters, 3);
  const auto t1 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < oracle_iters; ++i) {
    std::vector<double> per;
    oracle::forward(net, m, img, &per);
    for (std::size_t l = 0; l < per.size(); ++l) oracle_layer[l] += per[l];
  }
  const double oracle_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count() / oracle_iters;

  if (as_json) {
    json j;
    j["schema"] = "fracbnn.bench/1";
    j["iters"] = iters;
    j["oracle_iters"] = oracle_iters;
    j["threads"] = threads;
    j["engine_images_per_sec"] = 1.0 / engine_s;
    j["oracle_images_per_sec"] = 1.0 / oracle_s;
    j["speedup"] = oracle_s / engine_s;
    json layers = json::array();
    for (std::size_t l = 0; l < net.blocks.size(); ++l)
      layers.push_back({{"name", net.blocks[l].name},
                        {"engine_ms", 1e3 * engine_layer[l] / iters},
                        {"oracle_ms", 1e3 * oracle_layer[l] / oracle_iters}});
    j["layers"] = layers;
    std::cout << j.dump() << "\n";
    return 0;
  }
  std::cout << std::fixed << std::setprecision(2) << "packed engine  " << 1.0 / engine_s
            << " images/s (" << iters << " iters, " << threads << " threads)\n"
            << "dense oracle   " << 1.0 / oracle_s << " images/s (" << oracle_iters << " iters)\n"
            << "speedup        " << oracle_s / engine_s << "x\n";
  for (std::size_t l = 0; l < net.blocks.size(); ++l)
    std::cout << "  " << std::left << std::setw(22) << net.blocks[l].name << std::right
              << std::setw(10) << std::setprecision(3) << 1e3 * engine_layer[l] / iters << " ms"
              << std::setw(12) << 1e3 * oracle_layer[l] / oracle_iters << " ms\n";
  return 0;
}

int cmd_stats(const std::string& model_path, double sparsity, bool as_json) {
  const Model m = load_model_file(model_path);
  const OpCounts c = count_ops(network_for(m));
  if (as_json) {
    json j;
    j["schema"] = "fracbnn.stats/1";
    j["binary_weight_params"] = c.binary_weight_params;
    j["classifier_params"] = c.classifier_params;
    j["channel_params"] = c.channel_params;
    j["model_bits"] = c.model_bits();
    j["input_bmacs"] = c.input_bmacs;
    j["base_bmacs"] = c.base_bmacs;
    j["update_bmacs_max"] = c.update_bmacs_max;
    j["imacs"] = c.imacs;
    j["sparsity"] = sparsity;
    j["total_bmacs"] = c.total_bmacs(sparsity);
    std::cout << j.dump() << "\n";
    return 0;
  }
  std::cout << "binary weights      " << c.binary_weight_params << "\n"
            << "model size          " << c.model_bits() / 8 << " bytes\n"
            << "input-layer BMACs   " << c.input_bmacs << "\n"
            << "base-phase BMACs    " << c.base_bmacs << "\n"
            << "update BMACs (max)  " << c.update_bmacs_max << "\n"
            << "classifier IMACs    " << c.imacs << "\n"
            << "total BMACs @ sparsity " << sparsity << "  " << std::fixed << std::setprecision(0)
            << c.total_bmacs(sparsity) << "\n";
  return 0;
}

int cmd_gen(std::uint64_t seed, const std::string& gates, const std::string& out) {
  Model m = generate_synthetic(seed);
  if (gates == "open") m = with_uniform_gates(std::move(m), kGateAlwaysOpen);
  if (gates == "closed") m = with_uniform_gates(std::move(m), kGateAlwaysClosed);
  write_file_bytes(out, save_model(m));
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_image(std::uint64_t seed, const std::string& kind, const std::string& out) {
  const Image img = kind == "random" ? random_image(32, 32, seed) : smooth_image(32, 32, seed);
  write_file_bytes(out, write_ppm(img));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bit-packed binary neural network engine with fractional activations"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  app.add_option("--threads", threads, "kernel threads (default: $FRACBNN_THREADS or 1)");

  std::string image, model, out, gates = "calibrated", kind = "smooth";
  int resolution = 8;
  bool as_json = false, fault = false;
  std::uint64_t seed = 1;
  std::size_t cases = 100, models = 2, iters = 10;
  double sparsity = 0.6;

  auto* enc = app.add_subcommand("encode", "thermometer-encode a PPM into a packed tensor file");
  enc->add_option("--image", image)->required();
  enc->add_option("--resolution", resolution)->check(CLI::Range(1, 255));
  enc->add_option("--out", out)->required();

  auto* inf = app.add_subcommand("infer", "classify one image");
  inf->add_option("--model", model)->required();
  inf->add_option("--image", image)->required();
  inf->add_flag("--json", as_json);

  auto* ver = app.add_subcommand("verify", "engine vs dense oracle equivalence suite");
  ver->add_option("--seed", seed);
  ver->add_option("--cases", cases);
  ver->add_option("--models", models, "synthetic models for the end-to-end check");
  ver->add_flag("--inject-fault", fault, "perturb engine outputs (negative control)");
  ver->add_flag("--json", as_json);

  auto* ben = app.add_subcommand("bench", "packed engine vs dense oracle throughput");
  ben->add_option("--model", model)->required();
  ben->add_option("--image", image);
  ben->add_option("--iters", iters);
  ben->add_flag("--json", as_json);

  auto* sta = app.add_subcommand("stats", "parameter and op accounting");
  sta->add_option("--model", model)->required();
  sta->add_option("--sparsity", sparsity)->check(CLI::Range(0.0, 1.0));
  sta->add_flag("--json", as_json);

  auto* gen = app.add_subcommand("gen", "write a seeded synthetic model");
  gen->add_option("--seed", seed);
  gen->add_option("--gates", gates)->check(CLI::IsMember({"calibrated", "open", "closed"}));
  gen->add_option("--out", out)->required();

  auto* img = app.add_subcommand("image", "write a seeded synthetic 32x32 PPM");
  img->add_option("--seed", seed);
  img->add_option("--kind", kind)->check(CLI::IsMember({"smooth", "random"}));
  img->add_option("--out", out)->required();

  CLI11_PARSE(app, argc, argv);
  threads = resolve_threads(threads);

  try {
    if (*enc) return cmd_encode(image, resolution, out);
    if (*inf) return cmd_infer(model, image, as_json, threads);
    if (*ver) return cmd_verify(seed, cases, models, fault, as_json, threads);
    if (*ben) return cmd_bench(model, image, iters, as_json, threads);
    if (*sta) return cmd_stats(model, sparsity, as_json);
    if (*gen) return cmd_gen(seed, gates, out);
    if (*img) return cmd_image(seed, kind, out);
  } catch (const std::ios_base::failure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return kExitShape;
  } catch (const ModelFileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFormat;
  }
  return 0;
}
