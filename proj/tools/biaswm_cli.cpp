// biaswm command-line interface.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "biaswm/attacks.hpp"
#include "biaswm/bounds.hpp"
#include "biaswm/core_watermark.hpp"
#include "biaswm/error.hpp"
#include "biaswm/experiments.hpp"
#include "biaswm/io.hpp"
#include "biaswm/text_detection.hpp"
#include "biaswm/toy_lm.hpp"

namespace {

using namespace biaswm;
using io::json;

constexpr int kExitInput = 2;
constexpr int kExitContract = 3;

struct Common {
  std::uint64_t seed = 0;
  std::string config;
  std::string out = "-";
};

void emit(const Common& common, const std::string& content) {
  if (common.out.empty() || common.out == "-") {
    std::cout << content;
    std::cout.flush();
  } else {
    io::write_file(common.out, content);
  }
}

void add_common(CLI::App* sub, Common& common) {
  sub->add_option("--seed", common.seed, "Seed for every random draw");
  sub->add_option("--config", common.config, "JSON file whose fields become defaults for the flags");
  sub->add_option("--out", common.out, "Output path ('-' for stdout)");
}

void add_model_options(CLI::App* sub, ToyModelSpec& spec, std::string& model_file) {
  sub->add_option("--model", model_file, "Toy model spec JSON (flags below override it)");
  sub->add_option("--n", spec.n, "Alphabet size");
  sub->add_option("--context-order", spec.context_order, "Context tokens hashed per step");
  sub->add_option("--logit-scale", spec.logit_scale, "Standard deviation of logits");
  sub->add_option("--base-seed", spec.base_seed, "Model seed");
  sub->add_option("--significance-floor", spec.significance_floor, "Probability treated as zero");
  sub->add_option("--support-size", spec.support_size, "Candidate tokens per context (0 = all)");
  sub->add_option("--off-support-logit", spec.off_support_logit, "Logit of non-candidate tokens");
}

/// Apply a model file, then re-apply any model flags given explicitly.
ToyModelSpec resolve_model(const CLI::App* sub, const ToyModelSpec& flags, const std::string& model_file) {
  if (model_file.empty()) return flags;
  auto spec = io::spec_from_json(io::parse_json(io::read_file(model_file), model_file));
  auto given = [&](const char* name) { return sub->get_option(name)->count() > 0; };
  if (given("--n")) spec.n = flags.n;
  if (given("--context-order")) spec.context_order = flags.context_order;
  if (given("--logit-scale")) spec.logit_scale = flags.logit_scale;
  if (given("--base-seed")) spec.base_seed = flags.base_seed;
  if (given("--significance-floor")) spec.significance_floor = flags.significance_floor;
  if (given("--support-size")) spec.support_size = flags.support_size;
  if (given("--off-support-logit")) spec.off_support_logit = flags.off_support_logit;
  return spec;
}

io::TextFormat text_format(const std::string& name) {
  return name == "json" ? io::TextFormat::json : io::TextFormat::whitespace;
}

TokenSequence load_text(const std::string& path, std::size_t n, const std::string& format) {
  return io::parse_text(io::read_file(path), n, text_format(format));
}

// ---------------------------------------------------------------------------
// --config: JSON fields become flags inserted after the subcommand path,
// skipped when the same flag is already on the command line.

std::string flag_name(const std::string& key) {
  std::string out = "--" + key;
  std::replace(out.begin(), out.end(), '_', '-');
  return out;
}

bool flag_present(const std::vector<std::string>& args, const std::string& flag) {
  for (const auto& a : args) {
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();
  throw FormatError("config: unsupported value " + v.dump());
}

void flatten_config(const json& j, const std::vector<std::string>& args, std::vector<std::string>& out) {
  if (!j.is_object()) throw FormatError("config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "version") continue;
    if (value.is_object()) {
      flatten_config(value, args, out);
      continue;
    }
    const auto flag = flag_name(key);
    if (flag == "--config" || flag_present(args, flag)) continue;
    if (value.is_array()) {
      if (value.empty()) {
        throw FormatError("config: empty list for '" + key + "'");
      }
      out.push_back(flag);
      for (const auto& v : value) out.push_back(scalar_text(v));
    } else {
      out.push_back(flag + "=" + scalar_text(value));
    }
  }
}

std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path) return args;
  std::vector<std::string> extra;
  flatten_config(io::parse_json(io::read_file(*path), *path), args, extra);
  std::size_t at = std::min<std::size_t>(args.size(), 2);  // program + subcommand
  if (args.size() >= 2 && args[1] == "sweep") at = std::min<std::size_t>(args.size(), 3);
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(at), extra.begin(), extra.end());
  return args;
}

// ---------------------------------------------------------------------------

void fail(int code, const std::string& kind, const std::string& message) {
  json err{{"error", {{"kind", kind}, {"message", message}}}, {"exit_code", code}};
  std::cerr << err.dump() << "\n";
}

/// Checks whose failure the suite treats as a defect: enough trials and a
/// bound well clear of Monte Carlo noise.
bool must_hold(const BoundCheckResult& r) {
  return r.kind == BoundKind::upper && r.trials >= 10000 && r.analytic_bound >= 10.0 * r.standard_error;
}

std::string summary_report(const std::vector<SweepRow>& rows) {
  std::map<std::string, std::vector<const SweepRow*>> by_sweep;
  for (const auto& r : rows) by_sweep[r.sweep].push_back(&r);
  std::ostringstream out;
  for (const auto& [sweep, list] : by_sweep) {
    out << "## " << sweep << "\n\n";
    out << "| epsilon | attack | magnitude | max_tokens | detector | fpr | tpr | holdout_fpr | kept | mean_distinct | quality | delta |\n";
    out << "|---|---|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto* r : list) {
      out << "| " << io::format_number(r->epsilon) << " | " << r->attack << " | " << io::format_number(r->magnitude)
          << " | " << r->max_tokens << " | " << r->detector << " | " << io::format_number(r->fpr_target) << " | "
          << io::format_number(r->tpr) << " | " << io::format_number(r->holdout_fpr) << " | " << r->kept << "/"
          << r->responses << " | " << io::format_number(r->mean_distinct_tokens) << " | "
          << io::format_number(r->mean_quality_proxy) << " | " << io::format_number(r->empirical_delta) << " |"
          << (r->flagged ? " flagged" : "") << "\n";
    }
    if (sweep == "scaling") {
      const auto fit = fit_scaling(rows);
      out << "\nlog(miss) vs eps^4*|U|: slope " << io::format_number(fit.eps4.slope) << ", R^2 "
          << io::format_number(fit.eps4.r_squared) << "; vs eps^2*|U|: slope " << io::format_number(fit.eps2.slope)
          << ", R^2 " << io::format_number(fit.eps2.r_squared) << " (" << fit.points << " points)\n";
    }
    out << "\n";
  }
  return out.str();
}

int run(int argc, char** argv) {
  CLI::App app{"Gaussian bias watermarking: keys, detection, attacks, sweeps and bound checks"};
  app.require_subcommand(1);

  // keygen
  Common keygen_c;
  std::size_t keygen_n = 0;
  double keygen_eps = 0.0;
  auto* keygen = app.add_subcommand("keygen", "Sample a watermark key");
  add_common(keygen, keygen_c);
  keygen->add_option("--n", keygen_n, "Alphabet size")->required();
  keygen->add_option("--epsilon", keygen_eps, "Perturbation standard deviation")->required();

  // watermark
  Common wm_c;
  std::string wm_key, wm_bias;
  auto* wm = app.add_subcommand("watermark", "Add a key to a bias vector");
  add_common(wm, wm_c);
  wm->add_option("--key", wm_key, "Key file")->required();
  wm->add_option("--bias", wm_bias, "Bias file (default: zeros)");

  // detect-weights
  Common dw_c;
  std::string dw_key, dw_candidate, dw_original, dw_norm = "eps_n";
  WeightDetectConfig dw_cfg;
  std::optional<double> dw_threshold, dw_norm_override;
  auto* dw = app.add_subcommand("detect-weights", "Weight-space detection");
  add_common(dw, dw_c);
  dw->add_option("--key", dw_key, "Key file")->required();
  dw->add_option("--candidate", dw_candidate, "Candidate bias file")->required();
  dw->add_option("--original", dw_original, "Original bias file (default: zeros)");
  dw->add_option("--tau", dw_cfg.tau, "Inner-product threshold multiplier");
  dw->add_option("--norm-bound", dw_norm, "Closeness bound: eps_n or eps_sq_n")->check(CLI::IsMember({"eps_n", "eps_sq_n"}));
  dw->add_option("--threshold", dw_threshold, "Fixed inner-product threshold");
  dw->add_option("--norm-limit", dw_norm_override, "Fixed closeness bound");

  // detect-text
  Common dt_c;
  std::string dt_key, dt_text, dt_format = "whitespace", dt_detector = "inner_product";
  TextDetectConfig dt_cfg;
  auto* dt = app.add_subcommand("detect-text", "Detect the watermark in a token sequence");
  add_common(dt, dt_c);
  dt->add_option("--key", dt_key, "Key file")->required();
  dt->add_option("--text", dt_text, "Token file")->required();
  dt->add_option("--format", dt_format, "whitespace or json")->check(CLI::IsMember({"whitespace", "json"}));
  dt->add_option("--detector", dt_detector, "inner_product or count")->check(CLI::IsMember({"inner_product", "count"}));
  dt->add_option("--lambda", dt_cfg.lambda, "Minimum distinct tokens");
  dt->add_option("--tau-text", dt_cfg.tau_text, "Per-token score threshold");
  dt->add_option("--count-margin", dt_cfg.count_margin, "Count baseline margin over 1/2");

  // generate
  Common gen_c;
  ToyModelSpec gen_spec;
  std::string gen_model, gen_bias, gen_key, gen_prompt, gen_format = "whitespace";
  GenerationConfig gen_cfg;
  auto* gen = app.add_subcommand("generate", "Sample text from the toy model");
  add_common(gen, gen_c);
  add_model_options(gen, gen_spec, gen_model);
  gen->add_option("--bias", gen_bias, "Bias file (default: zeros)");
  gen->add_option("--key", gen_key, "Watermark the bias with this key first");
  gen->add_option("--prompt", gen_prompt, "Prompt token file");
  gen->add_option("--max-tokens", gen_cfg.max_tokens, "Tokens to generate");
  gen->add_option("--temperature", gen_cfg.temperature, "Sampling temperature");
  gen->add_option("--format", gen_format, "whitespace or json")->check(CLI::IsMember({"whitespace", "json"}));

  // attack
  Common at_c;
  std::string at_kind = "gaussian_perturb", at_spec_file, at_bias, at_text, at_format = "whitespace";
  double at_magnitude = 0.0, at_eps = 0.0;
  std::size_t at_n = 0;
  auto* at = app.add_subcommand("attack", "Apply a removal attack to biases or text");
  add_common(at, at_c);
  at->add_option("--kind", at_kind, "gaussian_perturb or token_substitute")
      ->check(CLI::IsMember({"gaussian_perturb", "token_substitute"}));
  at->add_option("--spec", at_spec_file, "AttackSpec JSON");
  at->add_option("--magnitude,--k,--rho", at_magnitude, "k (gaussian) or rho (substitution)");
  at->add_option("--epsilon", at_eps, "Key epsilon the Gaussian noise is scaled by");
  at->add_option("--bias", at_bias, "Watermarked bias file (gaussian_perturb)");
  at->add_option("--text", at_text, "Token file (token_substitute)");
  at->add_option("--n", at_n, "Alphabet size of the token file");
  at->add_option("--format", at_format, "whitespace or json")->check(CLI::IsMember({"whitespace", "json"}));

  // calibrate
  Common cal_c;
  ToyModelSpec cal_spec;
  std::string cal_model, cal_detector = "inner_product";
  double cal_eps = 1.0, cal_fpr = 0.01, cal_temp = 0.9;
  std::size_t cal_trials = 10000, cal_tokens = 300;
  auto* cal = app.add_subcommand("calibrate", "Score threshold for a target false-positive rate");
  add_common(cal, cal_c);
  add_model_options(cal, cal_spec, cal_model);
  cal->add_option("--detector", cal_detector, "inner_product or count")->check(CLI::IsMember({"inner_product", "count"}));
  cal->add_option("--epsilon", cal_eps, "Key epsilon");
  cal->add_option("--fpr", cal_fpr, "Target false-positive rate");
  cal->add_option("--trials", cal_trials, "Null (fresh key, text) pairs");
  cal->add_option("--max-tokens", cal_tokens, "Null text length");
  cal->add_option("--temperature", cal_temp, "Null text sampling temperature");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run an experiment sweep and write CSV");
  sweep->require_subcommand(1);
  Common sw_c;
  ExperimentConfig sw_cfg;
  std::string sw_model;
  auto add_sweep_options = [&](CLI::App* s) {
    add_common(s, sw_c);
    add_model_options(s, sw_cfg.model, sw_model);
    s->add_option("--epsilons", sw_cfg.epsilons, "Epsilon grid");
    s->add_option("--responses-per-point", sw_cfg.responses_per_point, "Responses per sweep point");
    s->add_option("--target-fprs", sw_cfg.target_fprs, "Target false-positive rates");
    s->add_option("--min-distinct", sw_cfg.min_distinct, "Distinct-token filter");
    s->add_option("--null-trials", sw_cfg.null_trials, "Calibration null pairs");
    s->add_option("--holdout-trials", sw_cfg.holdout_trials, "Held-out null pairs");
    s->add_option("--max-tokens", sw_cfg.max_tokens, "Tokens per response");
    s->add_option("--temperature", sw_cfg.temperature, "Sampling temperature");
    s->add_option("--lambda", sw_cfg.text.lambda, "Streaming detector minimum distinct tokens");
    s->add_option("--tau-text", sw_cfg.text.tau_text, "Streaming detector per-token threshold");
    s->add_option("--count-margin", sw_cfg.text.count_margin, "Count baseline margin");
    s->add_option("--attack-ks", sw_cfg.attack_ks, "Gaussian attack multipliers");
    s->add_option("--rhos", sw_cfg.rhos, "Substitution fractions");
    s->add_option("--lengths", sw_cfg.lengths, "Response lengths (scaling sweep)");
    s->add_option("--quality-contexts", sw_cfg.quality_contexts, "Contexts per quality estimate");
    s->add_option("--quality-keys", sw_cfg.quality_keys, "Bias draws per quality estimate");
    s->add_option("--certify-steps", sw_cfg.certify_steps, "Steps sampled for empirical delta");
    s->add_option("--c1-max", sw_cfg.bounds.c1_max, "Entropy certificate bound");
    s->add_option("--c2-min", sw_cfg.bounds.c2_min, "Quality certificate bound");
  };
  std::vector<CLI::App*> sweep_kinds;
  for (const char* kind : {"detect", "remove", "substitute", "scaling"}) {
    auto* s = sweep->add_subcommand(kind, std::string(kind) + " sweep");
    add_sweep_options(s);
    sweep_kinds.push_back(s);
  }

  // verify-bounds
  Common vb_c;
  auto* vb = app.add_subcommand("verify-bounds", "Run the concentration-bound checks, JSON lines");
  add_common(vb, vb_c);

  // report
  Common rp_c;
  std::vector<std::string> rp_inputs;
  auto* rp = app.add_subcommand("report", "Summarize sweep CSVs as tables");
  add_common(rp, rp_c);
  rp->add_option("inputs", rp_inputs, "Sweep CSV files")->required();

  std::vector<std::string> args(argv, argv + argc);
  try {
    args = expand_config(args);
  } catch (const FormatError& e) {
    fail(kExitInput, "format", e.what());
    return kExitInput;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail(kExitInput, "usage", e.what());
    return kExitInput;
  }

  if (keygen->parsed()) {
    emit(keygen_c, io::key_to_json(setup(keygen_n, keygen_eps, keygen_c.seed)).dump(2) + "\n");
  } else if (wm->parsed()) {
    const auto key = io::load_key(wm_key);
    const auto x = wm_bias.empty() ? BiasVector::zeros(key.size()) : io::load_bias(wm_bias);
    emit(wm_c, io::bias_to_json(watermark(x, key)).dump(2) + "\n");
  } else if (dw->parsed()) {
    const auto key = io::load_key(dw_key);
    const auto c = io::load_bias(dw_candidate);
    const auto x = dw_original.empty() ? BiasVector::zeros(key.size()) : io::load_bias(dw_original);
    dw_cfg.norm_bound = dw_norm == "eps_sq_n" ? NormBound::eps_sq_n : NormBound::eps_n;
    dw_cfg.threshold_override = dw_threshold;
    dw_cfg.norm_bound_override = dw_norm_override;
    emit(dw_c, io::report_to_json(weight_detect(c, x, key, dw_cfg)).dump(2) + "\n");
  } else if (dt->parsed()) {
    const auto key = io::load_key(dt_key);
    const auto text = load_text(dt_text, key.size(), dt_format);
    const auto report = dt_detector == "count" ? count_detect(text, key, dt_cfg) : text_detect(text, key, dt_cfg);
    emit(dt_c, io::report_to_json(report).dump(2) + "\n");
  } else if (gen->parsed()) {
    const auto spec = resolve_model(gen, gen_spec, gen_model);
    auto bias = gen_bias.empty() ? BiasVector::zeros(spec.n) : io::load_bias(gen_bias);
    if (!gen_key.empty()) bias = watermark(bias, io::load_key(gen_key));
    if (!gen_prompt.empty()) gen_cfg.prompt = load_text(gen_prompt, spec.n, gen_format);
    gen_cfg.sampler_seed = gen_c.seed;
    emit(gen_c, io::format_text(ToyModel(spec).generate(bias, gen_cfg), text_format(gen_format)));
  } else if (at->parsed()) {
    AttackSpec spec{io::parse_attack_kind(at_kind), at_magnitude, at_c.seed};
    if (!at_spec_file.empty()) {
      spec = io::attack_from_json(io::parse_json(io::read_file(at_spec_file), at_spec_file));
      if (at->get_option("--kind")->count()) spec.kind = io::parse_attack_kind(at_kind);
      if (at->get_option("--magnitude")->count()) spec.magnitude = at_magnitude;
      if (at->get_option("--seed")->count()) spec.seed = at_c.seed;
    }
    validate(spec);
    if (spec.kind == AttackKind::gaussian_perturb) {
      if (at_bias.empty()) throw ParameterError("attack: gaussian_perturb needs --bias");
      const auto w = io::load_bias(at_bias);
      emit(at_c, io::bias_to_json(gaussian_perturb_attack(w, at_eps, spec.magnitude, spec.seed)).dump(2) + "\n");
    } else if (spec.kind == AttackKind::token_substitute) {
      if (at_text.empty() || at_n == 0) throw ParameterError("attack: token_substitute needs --text and --n");
      const auto text = load_text(at_text, at_n, at_format);
      validate_tokens(text);
      emit(at_c, io::format_text(token_substitute_attack(text, spec.magnitude, spec.seed), text_format(at_format)));
    } else {
      throw ParameterError("attack: custom_bias_edit is only available through the library");
    }
  } else if (cal->parsed()) {
    const auto spec = resolve_model(cal, cal_spec, cal_model);
    GenerationConfig g;
    g.max_tokens = cal_tokens;
    g.temperature = cal_temp;
    const Detector det = cal_detector == "count" ? Detector::count : Detector::inner_product;
    const KeySampler sampler{spec.n, cal_eps, cal_c.seed};
    const double t = calibrate_threshold(det, spec, sampler, cal_fpr, cal_trials, g);
    json out{{"detector", cal_detector}, {"epsilon", cal_eps}, {"target_fpr", cal_fpr}, {"trials", cal_trials},
             {"threshold", t}};
    emit(cal_c, out.dump(2) + "\n");
  } else if (sweep->parsed()) {
    CLI::App* chosen = nullptr;
    for (auto* s : sweep_kinds) {
      if (s->parsed()) chosen = s;
    }
    sw_cfg.model = resolve_model(chosen, sw_cfg.model, sw_model);
    sw_cfg.seed = sw_c.seed;
    const std::string kind = chosen->get_name();
    std::vector<SweepRow> rows;
    if (kind == "detect") rows = run_detectability_sweep(sw_cfg);
    if (kind == "remove") rows = run_removal_sweep(sw_cfg);
    if (kind == "substitute") rows = run_substitution_sweep(sw_cfg);
    if (kind == "scaling") rows = run_scaling_sweep(sw_cfg);
    emit(sw_c, sweep_csv(rows));
  } else if (vb->parsed()) {
    const auto results = default_bound_suite(vb_c.seed);
    emit(vb_c, io::bounds_to_jsonl(results));
    for (const auto& r : results) {
      if (must_hold(r) && !r.satisfied) {
        fail(kExitContract, "invariant", "bound check failed: " + r.name);
        return kExitContract;
      }
    }
  } else if (rp->parsed()) {
    std::vector<SweepRow> rows;
    for (const auto& path : rp_inputs) {
      auto part = parse_sweep_csv(io::read_file(path));
      rows.insert(rows.end(), part.begin(), part.end());
    }
    emit(rp_c, summary_report(rows));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const FormatError& e) {
    fail(kExitInput, "format", e.what());
    return kExitInput;
  } catch (const DimensionError& e) {
    fail(kExitContract, "dimension", e.what());
    return kExitContract;
  } catch (const ParameterError& e) {
    fail(kExitContract, "parameter", e.what());
    return kExitContract;
  } catch (const InvariantError& e) {
    fail(kExitContract, "invariant", e.what());
    return kExitContract;
  } catch (const std::exception& e) {
    fail(kExitContract, "internal", e.what());
    return kExitContract;
  }
}
