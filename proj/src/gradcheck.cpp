#include "opendg/gradcheck.hpp"

#include <cmath>

#include "opendg/errors.hpp"

namespace opendg {

namespace {

struct TensorRef {
  std::string name;
  double* values;
  const double* grads;
  std::size_t count;
};

std::vector<TensorRef> walk_tensors(DomainModel& model, const ModelGradients& grads,
                                    const std::string& prefix) {
  std::vector<TensorRef> tensors;
  auto add_mlp = [&](Mlp& mlp, const MlpGradients& g, const std::string& part) {
    for (std::size_t li = 0; li < mlp.layers.size(); ++li) {
      const std::string base = prefix + "/" + part + "/layer" + std::to_string(li);
      tensors.push_back(TensorRef{base + "/weight", mlp.layers[li].weight.data.data(),
                                  g.layers[li].weight.data.data(),
                                  mlp.layers[li].weight.data.size()});
      tensors.push_back(TensorRef{base + "/bias", mlp.layers[li].bias.data(),
                                  g.layers[li].bias.data(),
                                  mlp.layers[li].bias.size()});
    }
  };
  add_mlp(model.extractor, grads.extractor, "extractor");
  add_mlp(model.classifier, grads.classifier, "classifier");
  return tensors;
}

double rel_err(double analytic, double fd) {
  const double scale = std::max({1e-6, std::abs(analytic), std::abs(fd)});
  return std::abs(analytic - fd) / scale;
}

std::vector<GradCheckEntry> fd_entries(DomainModel& model,
                                       const ModelGradients& analytic,
                                       const std::function<double()>& eval_loss,
                                       double step, const std::string& prefix) {
  std::vector<GradCheckEntry> entries;
  for (TensorRef& tensor : walk_tensors(model, analytic, prefix)) {
    double worst = 0.0;
    for (std::size_t i = 0; i < tensor.count; ++i) {
      const double saved = tensor.values[i];
      tensor.values[i] = saved + step;
      const double up = eval_loss();
      tensor.values[i] = saved - step;
      const double down = eval_loss();
      tensor.values[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      worst = std::max(worst, rel_err(tensor.grads[i], fd));
    }
    entries.push_back(GradCheckEntry{tensor.name, worst});
  }
  return entries;
}

}  // namespace

FdComparison compare_against_fd(ModelBank& bank, std::size_t s,
                                const ModelGradients& analytic,
                                const std::function<double()>& eval_loss,
                                double step) {
  FdComparison cmp;
  for (const auto& e :
       fd_entries(bank.models[s], analytic, eval_loss, step, "loss")) {
    if (e.max_rel_err > cmp.max_rel_err) {
      cmp.max_rel_err = e.max_rel_err;
      cmp.worst_name = e.name;
    }
  }
  return cmp;
}

GradCheckReport run_gradient_checks(std::uint64_t seed, const GradMutator& mutator) {
  BankSpec bank_spec;
  bank_spec.n_domains = 3;
  bank_spec.input_dim = 4;
  bank_spec.hidden_widths = {6};
  bank_spec.feature_dim = 5;
  bank_spec.num_classes = 4;
  bank_spec.seed = seed;
  ModelBank bank = make_bank(bank_spec);

  Rng data_rng(derive_seed(seed, 0x67636b64ULL));
  auto make_batch = [&](int domain) {
    FeatureBatch b;
    b.domain_index = domain;
    const std::size_t n = 5;
    b.features = Matrix(n, bank_spec.input_dim);
    for (auto& v : b.features.data) v = data_rng.normal();
    b.labels = Matrix(n, bank_spec.num_classes);
    for (std::size_t i = 0; i < n; ++i) {
      const auto cls = data_rng.index(bank_spec.num_classes);
      b.labels.at(i, cls) = 1.0;
      b.class_index.push_back(static_cast<int>(cls));
      b.raw_class.push_back(static_cast<int>(cls));
    }
    return b;
  };
  std::vector<FeatureBatch> batch_tr, batch_obj;
  for (int d = 0; d < 3; ++d) batch_tr.push_back(make_batch(d));
  for (int d = 0; d < 3; ++d) batch_obj.push_back(make_batch(d));

  GradCheckReport report;
  auto record = [&](std::vector<GradCheckEntry> entries) {
    for (auto& e : entries) {
      report.worst = std::max(report.worst, e.max_rel_err);
      report.entries.push_back(std::move(e));
    }
  };

  struct Variant {
    std::string tag;
    TrainConfig cfg;
  };
  std::vector<Variant> variants;
  {
    Variant full{"train_full", TrainConfig{}};
    variants.push_back(full);
    Variant classic{"train_classic_mixup", TrainConfig{}};
    classic.cfg.use_dmix_train = false;
    classic.cfg.use_classic_mixup = true;
    variants.push_back(classic);
    Variant foreign{"train_foreign_extractor", TrainConfig{}};
    foreign.cfg.foreign_extractor = true;
    variants.push_back(foreign);
  }

  for (const Variant& variant : variants) {
    for (std::size_t s = 0; s < bank.size(); ++s) {
      if (variant.tag != "train_full" && s > 0) continue;  // flag paths once
      const std::uint64_t rng_seed = derive_seed(seed, 0x74726eULL, s);
      ModelGradients analytic =
          [&] {
            Rng rng(rng_seed);
            return meta_train_loss(s, bank, batch_tr, variant.cfg, rng);
          }()
              .grads;
      if (mutator && variant.tag == "train_full" && s == 0) mutator(analytic);
      auto eval = [&, s] {
        Rng rng(rng_seed);
        return meta_train_loss(s, bank, batch_tr, variant.cfg, rng).loss;
      };
      record(fd_entries(bank.models[s], analytic, eval, 1e-5,
                        variant.tag + "/s" + std::to_string(s)));
    }
  }

  // Meta-objective gradients, taken at a realistic theta' for each domain.
  const TrainConfig cfg;
  for (std::size_t s = 0; s < bank.size(); ++s) {
    const std::uint64_t tr_seed = derive_seed(seed, 0x74726eULL, s);
    Rng rng_tr(tr_seed);
    const TrainLossResult tr = meta_train_loss(s, bank, batch_tr, cfg, rng_tr);
    DomainModel theta_prime = inner_update(bank.models[s], tr.grads, cfg.eta);
    const std::uint64_t obj_seed = derive_seed(seed, 0x6f626aULL, s);
    ModelGradients analytic =
        [&] {
          Rng rng(obj_seed);
          return meta_objective_loss(s, theta_prime, bank, batch_obj, cfg, rng);
        }()
            .grads;
    auto eval = [&, s] {
      Rng rng(obj_seed);
      return meta_objective_loss(s, theta_prime, bank, batch_obj, cfg, rng).loss;
    };
    record(fd_entries(theta_prime, analytic, eval, 1e-5,
                      "objective/s" + std::to_string(s)));
  }
  return report;
}

}  // namespace opendg
