#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tbn/complexity.hpp"
#include "tbn/data.hpp"
#include "tbn/gradcheck.hpp"
#include "tbn/network.hpp"
#include "tbn/trainer.hpp"

namespace {

struct NetFlags {
  std::string arch = "wtbn";
  double width_factor = 0.125;
  int blocks = 2;
  int clip_len = 8;
  int crop = 32;
  std::string tb_stages = "res2,res3,res4";
  int factors = 20;
  double keep = 0.5;
  int reduction = 4;
  int tb_kernel = 3;
  uint64_t init_seed = 1;
};

void add_net_flags(CLI::App* cmd, NetFlags& nf) {
  cmd->add_option("--arch", nf.arch, "model family: c2d, c3d, wtbn, dtbn")
      ->capture_default_str();
  cmd->add_option("--width-factor", nf.width_factor,
                  "stage width multiplier (1.0 = 64,128,256,512 channels)")
      ->capture_default_str();
  cmd->add_option("--blocks", nf.blocks, "residual blocks per stage")
      ->capture_default_str();
  cmd->add_option("--clip-len", nf.clip_len, "frames per clip")
      ->capture_default_str();
  cmd->add_option("--crop", nf.crop, "square input crop size")
      ->capture_default_str();
  cmd->add_option("--tb-stages", nf.tb_stages,
                  "comma list of stages holding TB blocks, e.g. res2,res3,res4")
      ->capture_default_str();
  cmd->add_option("--factors", nf.factors, "bilinear factor count p")
      ->capture_default_str();
  cmd->add_option("--keep", nf.keep, "DropFactor keep probability")
      ->capture_default_str();
  cmd->add_option("--reduction", nf.reduction, "bottleneck channel reduction")
      ->capture_default_str();
  cmd->add_option("--tb-kernel", nf.tb_kernel,
                  "temporal kernel size inside the bottleneck chain")
      ->capture_default_str();
  cmd->add_option("--init-seed", nf.init_seed, "weight initialization seed")
      ->capture_default_str();
}

std::array<bool, 4> parse_tb_stages(const std::string& arch,
                                    const std::string& spec) {
  std::array<bool, 4> stages{false, false, false, false};
  if (arch == "c2d" || arch == "c3d") return stages;
  size_t at = 0;
  while (at < spec.size()) {
    size_t comma = spec.find(',', at);
    std::string item = spec.substr(at, comma == std::string::npos
                                           ? std::string::npos
                                           : comma - at);
    if (item.size() != 4 || item.substr(0, 3) != "res" || item[3] < '1' ||
        item[3] > '4')
      throw tbn::ConfigError("bad --tb-stages entry '" + item +
                             "' (expected res1..res4)");
    stages[item[3] - '1'] = true;
    if (comma == std::string::npos) break;
    at = comma + 1;
  }
  return stages;
}

tbn::NetworkConfig make_net_config(const NetFlags& nf, int classes) {
  tbn::NetworkConfig cfg;
  cfg.arch = tbn::arch_from_string(nf.arch);
  cfg.width_factor = nf.width_factor;
  cfg.blocks_per_stage = nf.blocks;
  cfg.clip_len = nf.clip_len;
  cfg.height = nf.crop;
  cfg.width = nf.crop;
  cfg.classes = classes;
  cfg.tb_stages = parse_tb_stages(nf.arch, nf.tb_stages);
  cfg.tb_factors = nf.factors;
  cfg.dropfactor_keep = nf.keep;
  cfg.tb_reduction = nf.reduction;
  cfg.tb_temporal_kernel = nf.tb_kernel;
  cfg.init_seed = nf.init_seed;
  return cfg;
}

int cmd_gen(const std::string& out_dir, int classes, int train_n, int test_n,
            uint64_t seed, int frames, double noise) {
  tbn::MotionProgram prog;
  prog.t_raw = frames;
  prog.noise = noise;
  auto manifest = tbn::class_manifest(classes);
  for (int c = 0; c < classes; ++c)
    std::printf("class %d: %s\n", c, manifest[c].c_str());
  tbn::VideoDataset train =
      tbn::generate_dataset(prog, classes, train_n, tbn::mix64(seed, 0x7124));
  tbn::VideoDataset test =
      tbn::generate_dataset(prog, classes, test_n, tbn::mix64(seed, 0x7e57));
  std::string train_path = out_dir + "/train.tbv";
  std::string test_path = out_dir + "/test.tbv";
  tbn::write_dataset(train, train_path);
  tbn::write_dataset(test, test_path);
  std::printf("wrote %s (%zu videos)\n", train_path.c_str(),
              train.videos.size());
  std::printf("wrote %s (%zu videos)\n", test_path.c_str(), test.videos.size());
  return 0;
}

int cmd_audit(const NetFlags& nf, int classes, bool table1, int table_c,
              int table_p, int64_t table_q, bool json) {
  if (table1) {
    std::printf("closed-form accounting at C=%d, p=%d, Q=%lld:\n", table_c,
                table_p, static_cast<long long>(table_q));
    std::printf("%-16s %12s %14s %6s\n", "method", "params", "macs", "rfs");
    for (auto m : {tbn::Table1Method::kConv2d3x3, tbn::Table1Method::kConv3d3x3x3,
                   tbn::Table1Method::kTBBlock, tbn::Table1Method::kBottleneckTB}) {
      auto e = tbn::table1_formula(m, table_c, table_p, table_q);
      std::printf("%-16s %12lld %14lld %6d\n",
                  tbn::table1_method_name(m).c_str(),
                  static_cast<long long>(e.params),
                  static_cast<long long>(e.macs), e.rfs);
    }
    auto built = tbn::bottleneck_tb_cost("bottleneck_tb", table_c, table_c,
                                         table_p, 4, 3, 1, 1, 1);
    std::printf(
        "as-built bottleneck chain: params %lld, closed-form %lld, "
        "discrepancy %lld\n",
        static_cast<long long>(built.params),
        static_cast<long long>(built.formula_params),
        static_cast<long long>(built.discrepancy));
    return 0;
  }
  tbn::Model<float> model(make_net_config(nf, classes));
  tbn::ComplexityReport report = model.audit();
  std::fputs(json ? tbn::render_json(report).c_str()
                  : tbn::render_text(report).c_str(),
             stdout);
  return 0;
}

int cmd_gradcheck(const std::vector<std::string>& ops, int seeds,
                  uint64_t base_seed) {
  std::vector<std::string> names = tbn::available_checks();
  if (!ops.empty()) {
    std::vector<std::string> filtered;
    for (const auto& want : ops) {
      bool known = false;
      for (const auto& n : names)
        if (n == want) known = true;
      if (!known) throw tbn::ConfigError("unknown gradient check '" + want + "'");
      filtered.push_back(want);
    }
    names = filtered;
  }
  bool all_pass = true;
  for (const auto& name : names) {
    double worst = 0;
    uint64_t worst_seed = base_seed;
    double tol = 0;
    for (int s = 0; s < seeds; ++s) {
      tbn::CheckResult r = tbn::run_check(name, base_seed + s);
      tol = r.tol;
      if (r.worst_rel > worst) {
        worst = r.worst_rel;
        worst_seed = base_seed + s;
      }
    }
    bool pass = worst <= tol;
    all_pass = all_pass && pass;
    std::printf("grad %-24s worst_rel=%9.3e tol=%7.1e seeds=%d worst_seed=%llu %s\n",
                name.c_str(), worst, tol, seeds,
                static_cast<unsigned long long>(worst_seed),
                pass ? "PASS" : "FAIL");
  }
  if (ops.empty()) {
    for (const auto& r : tbn::run_oracle_suite(base_seed)) {
      all_pass = all_pass && r.pass;
      std::printf("route %-23s worst_abs=%9.3e tol=%7.1e %s\n", r.op.c_str(),
                  r.worst_rel, r.tol, r.pass ? "PASS" : "FAIL");
    }
  }
  return all_pass ? 0 : 1;
}

int cmd_train(const NetFlags& nf, const std::string& data_path,
              const std::string& eval_path, const std::string& ckpt_path,
              const std::string& log_path, tbn::TrainConfig tc) {
  tbn::VideoDataset train_set = tbn::read_dataset(data_path);
  tbn::VideoDataset eval_set;
  if (!eval_path.empty()) eval_set = tbn::read_dataset(eval_path);
  tc.clip_len = nf.clip_len;
  tc.crop = nf.crop;
  tbn::Model<float> model(make_net_config(nf, train_set.classes));
  tbn::TrainResult result =
      tbn::train(model, train_set, eval_path.empty() ? nullptr : &eval_set, tc,
                 &std::cout, ckpt_path);
  if (!log_path.empty()) {
    std::ofstream log(log_path, std::ios::trunc);
    if (!log)
      throw tbn::FormatError("cannot open '" + log_path + "' for writing");
    log << result.log_text;
  }
  if (!ckpt_path.empty())
    std::printf("wrote checkpoint %s\n", ckpt_path.c_str());
  return 0;
}

int cmd_eval(const NetFlags& nf, const std::string& data_path,
             const std::string& ckpt_path, tbn::EvalProtocol proto) {
  tbn::VideoDataset test_set = tbn::read_dataset(data_path);
  tbn::Model<float> model(make_net_config(nf, test_set.classes));
  model.load_checkpoint(ckpt_path);
  proto.clip_len = nf.clip_len;
  proto.crop = nf.crop;
  tbn::EvalResult r = tbn::evaluate(model, test_set, proto);
  std::printf(
      "protocol: %d clips at evenly spaced starts x %d crop views, "
      "mean softmax over views\n",
      proto.clips, proto.crops);
  std::printf("top1=%.4f top%d=%.4f\n", r.top1, proto.topk, r.topk);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"temporal bilinear video network toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "structured-text config file (flags override)");
  app.allow_config_extras(false);

  auto* gen = app.add_subcommand("gen", "generate a synthetic video dataset");
  std::string gen_out = ".";
  int gen_classes = 4, gen_train = 2000, gen_test = 500, gen_frames = 64;
  uint64_t gen_seed = 7;
  double gen_noise = 0.03;
  gen->add_option("--out", gen_out, "output directory")->capture_default_str();
  gen->add_option("--classes", gen_classes, "class count (2 or 4)")
      ->capture_default_str();
  gen->add_option("--train", gen_train, "training video count")
      ->capture_default_str();
  gen->add_option("--test", gen_test, "test video count")->capture_default_str();
  gen->add_option("--seed", gen_seed, "generator seed")->capture_default_str();
  gen->add_option("--frames", gen_frames, "frames per video")
      ->capture_default_str();
  gen->add_option("--noise", gen_noise, "per-pixel noise amplitude")
      ->capture_default_str();

  auto* audit = app.add_subcommand("audit", "parameter/FLOP/receptive-field report");
  NetFlags audit_nf;
  int audit_classes = 4;
  bool audit_table1 = false, audit_json = false;
  int audit_c = 64, audit_p = 20;
  int64_t audit_q = 1;
  add_net_flags(audit, audit_nf);
  audit->add_option("--classes", audit_classes, "classifier output count")
      ->capture_default_str();
  audit->add_flag("--table1", audit_table1,
                  "print the closed-form per-method accounting instead");
  audit->add_option("--C", audit_c, "channel count for --table1")
      ->capture_default_str();
  audit->add_option("--p", audit_p, "factor count for --table1")
      ->capture_default_str();
  audit->add_option("--Q", audit_q, "output positions for --table1")
      ->capture_default_str();
  audit->add_flag("--json", audit_json, "emit the report as JSON");

  auto* grad = app.add_subcommand("gradcheck",
                                  "finite-difference and dual-route verification");
  std::vector<std::string> grad_ops;
  int grad_seeds = 5;
  uint64_t grad_seed = 1;
  grad->add_option("--ops", grad_ops, "restrict to these checks")->delimiter(',');
  grad->add_option("--seeds", grad_seeds, "seeds per check")
      ->capture_default_str();
  grad->add_option("--seed", grad_seed, "base seed")->capture_default_str();

  auto* train = app.add_subcommand("train", "train a model on a dataset file");
  NetFlags train_nf;
  std::string train_data, train_eval, train_ckpt, train_log;
  tbn::TrainConfig tc;
  add_net_flags(train, train_nf);
  train->add_option("--data", train_data, "training dataset file")->required();
  train->add_option("--eval-data", train_eval,
                    "optional dataset for the per-epoch accuracy column");
  train->add_option("--checkpoint", train_ckpt, "checkpoint output path");
  train->add_option("--log", train_log, "write the epoch log to this file");
  train->add_option("--epochs", tc.epochs, "training epochs")
      ->capture_default_str();
  train->add_option("--batch", tc.batch, "clips per step")->capture_default_str();
  train->add_option("--lr", tc.base_lr, "initial learning rate")
      ->capture_default_str();
  train->add_option("--momentum", tc.momentum, "SGD momentum")
      ->capture_default_str();
  train->add_option("--wd", tc.weight_decay, "weight decay")
      ->capture_default_str();
  train->add_option("--seed", tc.seed, "training seed")->capture_default_str();
  train->add_option("--clip-stride", tc.clip_stride, "frame sampling stride")
      ->capture_default_str();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  NetFlags eval_nf;
  std::string eval_data, eval_ckpt;
  tbn::EvalProtocol proto;
  add_net_flags(eval, eval_nf);
  eval->add_option("--data", eval_data, "dataset file")->required();
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint to load")->required();
  eval->add_option("--clips", proto.clips, "clips per video")
      ->capture_default_str();
  eval->add_option("--crops", proto.crops, "crop views per clip (1..6)")
      ->capture_default_str();
  eval->add_option("--topk", proto.topk, "k for the top-k column")
      ->capture_default_str();
  eval->add_option("--clip-stride", proto.clip_stride, "frame sampling stride")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
    if (gen->parsed())
      return cmd_gen(gen_out, gen_classes, gen_train, gen_test, gen_seed,
                     gen_frames, gen_noise);
    if (audit->parsed())
      return cmd_audit(audit_nf, audit_classes, audit_table1, audit_c, audit_p,
                       audit_q, audit_json);
    if (grad->parsed()) return cmd_gradcheck(grad_ops, grad_seeds, grad_seed);
    if (train->parsed())
      return cmd_train(train_nf, train_data, train_eval, train_ckpt, train_log,
                       tc);
    if (eval->parsed()) return cmd_eval(eval_nf, eval_data, eval_ckpt, proto);
    return 2;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\nrun with --help for usage\n";
    return 2;
  } catch (const tbn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const tbn::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const tbn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
