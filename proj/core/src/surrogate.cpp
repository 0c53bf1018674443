#include "diffcal/surrogate.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <json.hpp>
#include <mutex>
#include <numeric>
#include <thread>

#include "diffcal/error.hpp"
#include "diffcal/io.hpp"

namespace diffcal {
namespace {

constexpr int kFormatVersion = 1;
using nlohmann::json;

void check_records(const std::vector<VelocityRecord>& records) {
  if (records.empty()) throw InvalidInput("no velocity records");
  const auto p = records.front().beta.size();
  const auto d = records.front().v0_flat.size();
  const auto dp = records.front().pi0_flat.size();
  for (const auto& r : records) {
    if (r.beta.size() != p || r.v0_flat.size() != d || r.pi0_flat.size() != dp) {
      throw InvalidInput("velocity records have inconsistent sizes");
    }
    if (!r.beta.allFinite() || !r.v0_flat.allFinite() || !r.pi0_flat.allFinite() ||
        !std::isfinite(r.energy) || r.energy < 0.0) {
      throw InvalidInput("velocity record is not finite");
    }
  }
}

json encode(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(encode_double(v(i)));
  return a;
}

json encode(const Eigen::MatrixXd& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()},
              {"data", encode(Eigen::VectorXd(m.reshaped<Eigen::RowMajor>()))}};
}

Eigen::VectorXd decode_vector(const json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(i) = decode_double(a[i].get<std::string>());
  return v;
}

Eigen::MatrixXd decode_matrix(const json& o) {
  const auto rows = o.at("rows").get<Eigen::Index>();
  const auto cols = o.at("cols").get<Eigen::Index>();
  const Eigen::VectorXd flat = decode_vector(o.at("data"));
  if (flat.size() != rows * cols) throw InvalidInput("serialized matrix has the wrong size");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) m.row(r) = flat.segment(r * cols, cols).transpose();
  return m;
}

}  // namespace

std::vector<VelocityRecord> filter_worst(const std::vector<VelocityRecord>& records,
                                         double fraction) {
  if (records.empty()) throw InvalidInput("filter_worst: empty record list");
  if (!(fraction >= 0.0 && fraction < 1.0)) throw InvalidInput("filter fraction must be in [0, 1)");
  const std::size_t n = records.size();
  const auto drop = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-12));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return records[a].energy < records[b].energy;
  });
  std::vector<bool> keep(n, false);
  for (std::size_t k = 0; k < n - drop; ++k) keep[order[k]] = true;
  std::vector<VelocityRecord> out;
  out.reserve(n - drop);
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) out.push_back(records[i]);
  }
  return out;
}

SurrogateModel fit_surrogate(const std::vector<VelocityRecord>& records,
                             const SurrogateConfig& cfg) {
  check_records(records);
  if (records.size() < 3) throw InvalidInput("surrogate needs at least 3 records");
  const auto n = static_cast<Eigen::Index>(records.size());
  const Eigen::Index p = records.front().beta.size();
  Eigen::MatrixXd betas(n, p), vs(n, records.front().v0_flat.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    betas.row(i) = records[i].beta.transpose();
    vs.row(i) = records[i].v0_flat.transpose();
  }
  SurrogateModel model;
  model.training_size = static_cast<int>(n);
  model.basis = fit_pca(vs, cfg.variance_fraction);
  const Eigen::MatrixXd scores = pca_scores(model.basis, vs);
  const int P = model.basis.size();
  const Eigen::MatrixXd resid =
      (vs - scores * model.basis.components).rowwise() - model.basis.mean.transpose();
  model.residual_variance = resid.array().square().colwise().sum() / static_cast<double>(n - 1);

  model.gps.resize(P);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&] {
    for (int j; (j = next++) < P;) {
      try {
        GpFitConfig gcfg = cfg.gp;
        gcfg.seed = cfg.gp.seed + static_cast<std::uint64_t>(j);
        model.gps[j] = GpModel::fit(betas, scores.col(j), gcfg);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int jobs = std::clamp(cfg.jobs, 1, std::max(P, 1));
  std::vector<std::thread> pool;
  for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  Eigen::Index imin = 0;
  for (Eigen::Index i = 1; i < n; ++i) {
    if (records[i].energy < records[imin].energy) imin = i;
  }
  model.u_min = scores.row(imin).transpose();

  if (records.front().pi0_flat.size() > 0) {
    Eigen::MatrixXd pis(n, records.front().pi0_flat.size());
    for (Eigen::Index i = 0; i < n; ++i) pis.row(i) = records[i].pi0_flat.transpose();
    const Eigen::MatrixXd z = vs * model.basis.components.transpose();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(z, Eigen::ComputeThinU | Eigen::ComputeThinV);
    model.momentum.components = svd.solve(pis);
  }
  return model;
}

LatentPrediction predict_latent(const SurrogateModel& model, const Eigen::VectorXd& beta,
                                bool with_jacobian) {
  const int P = model.latent_dim();
  if (beta.size() != model.input_dim()) throw InvalidInput("predict_latent: wrong beta size");
  LatentPrediction out;
  out.mean.resize(P);
  out.variance.resize(P);
  if (with_jacobian) {
    out.mean_jacobian.resize(P, beta.size());
    out.variance_jacobian.resize(P, beta.size());
  }
  for (int j = 0; j < P; ++j) {
    const GpPrediction g = model.gps[j].predict(beta, with_jacobian);
    out.mean(j) = g.mean;
    out.variance(j) = g.variance;
    if (with_jacobian) {
      out.mean_jacobian.row(j) = g.mean_gradient.transpose();
      out.variance_jacobian.row(j) = g.variance_gradient.transpose();
    }
  }
  return out;
}

Eigen::VectorXd reconstruct_v0(const SurrogateModel& model, const Eigen::VectorXd& u) {
  return model.basis.reconstruct(u);
}

Eigen::VectorXd momentum_from_latent(const SurrogateModel& model, const Eigen::VectorXd& u) {
  if (model.momentum.empty()) throw InvalidInput("surrogate was trained without momenta");
  if (u.size() != model.latent_dim()) throw InvalidInput("momentum lift: latent size mismatch");
  const Eigen::VectorXd z = u + model.basis.components * model.basis.mean;
  return model.momentum.components.transpose() * z;
}

std::string serialize_surrogate(const SurrogateModel& model) {
  json doc;
  doc["format"] = "diffcal-surrogate";
  doc["version"] = kFormatVersion;
  doc["training_size"] = model.training_size;
  doc["pca"] = {{"mean", encode(model.basis.mean)},
                {"components", encode(model.basis.components)},
                {"explained_variance", encode(model.basis.explained_variance)},
                {"variance_fraction", encode_double(model.basis.variance_fraction)},
                {"total_variance", encode_double(model.basis.total_variance)},
                {"degenerate", model.basis.degenerate}};
  json gps = json::array();
  for (const GpModel& g : model.gps) {
    const GpHyperparameters& h = g.hyperparameters();
    gps.push_back({{"lengthscales", encode(h.lengthscales)},
                   {"signal_variance", encode_double(h.signal_variance)},
                   {"nugget", encode_double(h.nugget)},
                   {"inputs", encode(g.inputs())},
                   {"targets", encode(g.targets())}});
  }
  doc["gps"] = std::move(gps);
  doc["u_min"] = encode(model.u_min);
  doc["residual_variance"] = encode(model.residual_variance);
  doc["momentum"] = encode(model.momentum.components);
  return doc.dump(1);
}

SurrogateModel deserialize_surrogate(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("format").get<std::string>() != "diffcal-surrogate") {
      throw InvalidInput("not a surrogate document");
    }
    const int version = doc.at("version").get<int>();
    if (version != kFormatVersion) {
      throw InvalidInput("unsupported surrogate version " + std::to_string(version));
    }
    SurrogateModel m;
    m.training_size = doc.at("training_size").get<int>();
    const json& pca = doc.at("pca");
    m.basis.mean = decode_vector(pca.at("mean"));
    m.basis.components = decode_matrix(pca.at("components"));
    m.basis.explained_variance = decode_vector(pca.at("explained_variance"));
    m.basis.variance_fraction = decode_double(pca.at("variance_fraction").get<std::string>());
    m.basis.total_variance = decode_double(pca.at("total_variance").get<std::string>());
    m.basis.degenerate = pca.at("degenerate").get<bool>();
    for (const json& g : doc.at("gps")) {
      GpHyperparameters h{decode_vector(g.at("lengthscales")),
                          decode_double(g.at("signal_variance").get<std::string>()),
                          decode_double(g.at("nugget").get<std::string>())};
      m.gps.emplace_back(decode_matrix(g.at("inputs")), decode_vector(g.at("targets")), h);
    }
    m.u_min = decode_vector(doc.at("u_min"));
    m.residual_variance = decode_vector(doc.at("residual_variance"));
    m.momentum.components = decode_matrix(doc.at("momentum"));
    if (static_cast<int>(m.gps.size()) != m.basis.size() || m.u_min.size() != m.basis.size() ||
        m.basis.components.cols() != m.basis.mean.size() ||
        m.residual_variance.size() != m.basis.mean.size()) {
      throw InvalidInput("surrogate document is inconsistent");
    }
    return m;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed surrogate document: ") + e.what());
  }
}

}  // namespace diffcal
