// SPDX-License-Identifier: Apache-2.0
/**
 * @file   lgc.cpp
 * @brief  Command-line front end: plan, count-params, train, eval,
 *         gradcheck, reproduce-tables.
 */
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lgc/lgc.hpp"

namespace {

struct DataOptions {
  std::string dataset = "cifar";
  std::string data_dir;
  std::size_t train_size = 3000;
  std::size_t test_size = 600;
  std::size_t limit = 0;
};

void add_data_options(CLI::App *cmd, DataOptions &d) {
  cmd->add_option("--dataset", d.dataset, "cifar or synthetic (6-class 64x64)")
      ->check(CLI::IsMember({"cifar", "synthetic"}))
      ->capture_default_str();
  cmd->add_option("--data-dir", d.data_dir,
                  "CIFAR-10 binary directory (required for --dataset cifar)");
  cmd->add_option("--train-size", d.train_size, "synthetic training images")
      ->capture_default_str();
  cmd->add_option("--test-size", d.test_size, "synthetic test images")
      ->capture_default_str();
  cmd->add_option("--limit", d.limit,
                  "use only the first N training images (0: all)")
      ->capture_default_str();
}

/// Loads both splits and normalizes them with training statistics.
std::pair<lgc::Dataset, lgc::Dataset> load_data(const DataOptions &d,
                                                std::uint64_t seed) {
  std::pair<lgc::Dataset, lgc::Dataset> raw;
  if (d.dataset == "cifar") {
    if (d.data_dir.empty())
      throw lgc::DataError("--data-dir is required for --dataset cifar");
    raw = lgc::load_cifar10(d.data_dir);
  } else {
    raw = lgc::make_synthetic_faceset(seed, d.train_size, d.test_size);
  }
  if (d.limit && d.limit < raw.first.size())
    raw.first.images.resize(d.limit);
  return lgc::normalize(std::move(raw.first), std::move(raw.second));
}

lgc::NetworkSpec spec_for(const std::string &scheme, bool no_shortcut,
                          const DataOptions &d) {
  return d.dataset == "cifar" ? lgc::cifar_spec(scheme, !no_shortcut)
                              : lgc::face_spec(scheme, !no_shortcut);
}

void emit(const std::string &text, const std::string &out_path) {
  std::cout << text;
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out)
      throw lgc::Error("cannot write " + out_path);
    out << text;
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Logarithmic filter grouping for shallow CNNs"};
  app.require_subcommand(1);

  std::string format = "text";
  std::string out_path;
  auto add_common = [&](CLI::App *cmd) {
    cmd->add_option("--format", format, "text or csv")
        ->check(CLI::IsMember({"text", "csv"}))
        ->capture_default_str();
    cmd->add_option("--out", out_path, "also write the output to this file");
  };

  // plan
  auto *plan = app.add_subcommand("plan", "print group size arrays");
  std::string plan_scheme;
  int plan_channels = 0, plan_groups = 0;
  std::string plan_family = "Logarithmic";
  plan->add_option("scheme,--scheme", plan_scheme,
                   "canonical scheme name (default Logarithmic-8)");
  auto *ch_opt =
      plan->add_option("--channels", plan_channels, "channel width of a layer");
  auto *gr_opt = plan->add_option("--groups", plan_groups, "group count");
  ch_opt->needs(gr_opt);
  gr_opt->needs(ch_opt);
  plan->add_option("--family", plan_family, "uniform or logarithmic")
      ->transform(CLI::IsMember({"Uniform", "Logarithmic"}, CLI::ignore_case))
      ->capture_default_str();
  add_common(plan);

  // count-params
  auto *count = app.add_subcommand("count-params", "closed-form weight count");
  std::string count_scheme = "Logarithmic-8";
  int count_classes = 10;
  bool count_no_shortcut = false;
  count->add_option("--scheme", count_scheme, "scheme name, or 'all'")
      ->capture_default_str();
  count->add_option("--classes", count_classes, "number of classes")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  count->add_flag("--no-shortcut", count_no_shortcut, "drop identity shortcuts");
  add_common(count);

  // reproduce-tables
  auto *tables = app.add_subcommand(
      "reproduce-tables", "computed totals next to the published ones");
  int table_classes = 10;
  tables->add_option("--classes", table_classes, "6 or 10")
      ->check(CLI::IsMember({6, 10}))
      ->capture_default_str();
  add_common(tables);

  // gradcheck
  auto *grad = app.add_subcommand("gradcheck", "finite-difference checks");
  std::uint64_t grad_seed = 0;
  lgc::GradCheckOptions grad_opt;
  grad->add_option("--seed", grad_seed)->capture_default_str();
  grad->add_option("--tolerance", grad_opt.tolerance, "max relative error")
      ->capture_default_str();
  grad->add_option("--coords", grad_opt.max_coords_per_tensor,
                   "coordinates sampled per tensor")
      ->capture_default_str();
  add_common(grad);

  // train
  auto *tr = app.add_subcommand("train", "train a network");
  std::string tr_scheme = "Logarithmic-8";
  bool tr_no_shortcut = false;
  std::uint64_t tr_seed = 0;
  lgc::TrainConfig cfg;
  std::string tr_schedule = "cifar";
  std::string tr_augment = "default";
  DataOptions tr_data;
  tr->add_option("--scheme", tr_scheme)->capture_default_str();
  tr->add_flag("--no-shortcut", tr_no_shortcut, "drop identity shortcuts");
  tr->add_option("--seed", tr_seed)->capture_default_str();
  tr->add_option("--epochs", cfg.epochs)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  tr->add_option("--batch-size", cfg.batch_size)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  tr->add_option("--lr-schedule", tr_schedule, "cifar, fer or const:<lr>")
      ->capture_default_str();
  tr->add_option("--augment", tr_augment,
                 "default (crop-flip for cifar, affine for synthetic), "
                 "none, crop-flip or affine")
      ->check(CLI::IsMember({"default", "none", "crop-flip", "affine"}))
      ->capture_default_str();
  tr->add_option("--checkpoint", cfg.checkpoint, "checkpoint path");
  tr->add_option("--out", out_path, "write the epoch history CSV here");
  add_data_options(tr, tr_data);

  // eval
  auto *ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_scheme = "Logarithmic-8";
  bool ev_no_shortcut = false;
  std::uint64_t ev_seed = 0;
  std::string ev_checkpoint;
  DataOptions ev_data;
  ev->add_option("--scheme", ev_scheme)->capture_default_str();
  ev->add_flag("--no-shortcut", ev_no_shortcut, "drop identity shortcuts");
  ev->add_option("--seed", ev_seed, "synthetic data seed")
      ->capture_default_str();
  ev->add_option("--checkpoint", ev_checkpoint, "checkpoint path")->required();
  add_data_options(ev, ev_data);
  add_common(ev);

  CLI11_PARSE(app, argc, argv);

  try {
    const lgc::OutputFormat fmt = lgc::parse_format(format);

    if (*plan) {
      if (plan_channels) {
        const auto s = lgc::make_scheme(lgc::parse_family(plan_family),
                                        plan_channels, plan_groups);
        if (fmt == lgc::OutputFormat::Csv)
          emit("family,channels,group_count,sizes\n" +
                   std::string(lgc::to_string(s.family)) + "," +
                   std::to_string(s.channels) + "," +
                   std::to_string(s.group_count) + ",\"" +
                   lgc::join_sizes(s.sizes) + "\"\n",
               out_path);
        else
          emit("family: " + std::string(lgc::to_string(s.family)) +
                   "\nchannels: " + std::to_string(s.channels) +
                   "\ngroup_count: " + std::to_string(s.group_count) +
                   "\nsizes: " + lgc::join_sizes(s.sizes) + "\n",
               out_path);
        return 0;
      }
      if (plan_scheme.empty())
        plan_scheme = "Logarithmic-8";
      const auto t = lgc::canonical_scheme_table(plan_scheme);
      lgc::validate(t);
      emit(fmt == lgc::OutputFormat::Csv ? lgc::render_plan_csv(t)
                                         : lgc::render_plan(t),
           out_path);
      return 0;
    }

    if (*count) {
      std::vector<lgc::NetworkSpec> specs;
      if (count_scheme == "all") {
        for (const auto &name : lgc::canonical_scheme_names())
          specs.push_back(lgc::cifar_spec(name, !count_no_shortcut));
      } else {
        specs.push_back(lgc::cifar_spec(count_scheme, !count_no_shortcut));
      }
      for (auto &s : specs)
        s.num_classes = count_classes;
      if (specs.size() == 1)
        emit(lgc::render_budget(specs[0], lgc::count_parameters(specs[0]), fmt),
             out_path);
      else
        emit(lgc::render_report(lgc::scheme_comparison_report(specs), fmt),
             out_path);
      return 0;
    }

    if (*tables) {
      const auto rows = lgc::reproduce_tables(table_classes);
      emit(lgc::render_tables(rows, fmt), out_path);
      for (const auto &r : rows)
        if (r.flag == lgc::MatchFlag::Mismatch)
          return 1;
      return 0;
    }

    if (*grad) {
      const auto results = lgc::run_gradcheck_suite(grad_seed, grad_opt);
      emit(lgc::render_gradcheck(results, grad_opt.tolerance, fmt), out_path);
      for (const auto &r : results)
        if (!r.passed) {
          std::cerr << "gradcheck failed: " << r.name << '\n';
          return 1;
        }
      return 0;
    }

    if (*tr) {
      auto [train_set, test_set] = load_data(tr_data, tr_seed);
      const auto spec = spec_for(tr_scheme, tr_no_shortcut, tr_data);
      cfg.seed = tr_seed;
      cfg.schedule = lgc::parse_schedule(tr_schedule, cfg.epochs);
      if (tr_augment == "default")
        cfg.augmentation = tr_data.dataset == "cifar"
                               ? lgc::Augmentation::Cifar
                               : lgc::Augmentation::Affine;
      else if (tr_augment == "none")
        cfg.augmentation = lgc::Augmentation::None;
      else if (tr_augment == "crop-flip")
        cfg.augmentation = lgc::Augmentation::Cifar;
      else
        cfg.augmentation = lgc::Augmentation::Affine;
      auto model = lgc::build_network(spec, tr_seed);
      std::cerr << "training " << spec.label() << " ("
                << lgc::count_parameters(spec).total << " weights) on "
                << train_set.size() << " images\n";
      const auto history =
          lgc::train(model, train_set, &test_set, cfg,
                     [](const lgc::EpochRecord &r) {
                       std::fprintf(stderr,
                                    "epoch %d lr %.2e loss %.5f acc %.4f\n",
                                    r.epoch, r.lr, r.train_loss,
                                    r.test_accuracy.value_or(-1.0));
                     });
      emit(history.to_csv(), out_path);
      if (history.best_accuracy)
        std::fprintf(stderr, "final accuracy %.4f, best %.4f (epoch %d)\n",
                     history.final_accuracy().value_or(-1.0),
                     *history.best_accuracy, history.best_epoch);
      return 0;
    }

    if (*ev) {
      auto [train_set, test_set] = load_data(ev_data, ev_seed);
      const auto spec = spec_for(ev_scheme, ev_no_shortcut, ev_data);
      auto model = lgc::build_network(spec, 0);
      lgc::restore_parameters(model.params(),
                              lgc::load_checkpoint(ev_checkpoint));
      const auto r = lgc::evaluate(model, test_set);
      std::string text;
      if (fmt == lgc::OutputFormat::Csv) {
        text = "class,accuracy\n";
        for (std::size_t c = 0; c < r.per_class_accuracy.size(); ++c)
          text += std::to_string(c) + "," +
                  std::to_string(r.per_class_accuracy[c]) + "\n";
        text += "all," + std::to_string(r.accuracy) + "\n";
      } else {
        text = "accuracy " + std::to_string(r.accuracy) + " on " +
               std::to_string(r.total) + " images\n";
        for (std::size_t c = 0; c < r.per_class_accuracy.size(); ++c)
          text += "  class " + std::to_string(c) + ": " +
                  std::to_string(r.per_class_accuracy[c]) + "\n";
      }
      emit(text, out_path);
      return 0;
    }
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
