#include "lmcpf/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lmcpf/version.hpp"

namespace lmcpf {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError("config: unknown key \"" + it.key() + "\" in " +
                        where);
  }
}

template <class T>
void read_into(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for \"") + key +
                      "\": " + e.what());
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path + " for reading");
  return in;
}

ModelSpec parse_model(const json& j) {
  check_keys(j, {"kind", "n", "forcing", "sigma", "rho", "beta", "dt",
                 "steps_per_cycle"},
             "model");
  std::string kind = "lorenz96";
  read_into(j, "kind", kind);
  ModelSpec m;
  if (kind == "lorenz63") {
    m = ModelSpec::lorenz63();
    read_into(j, "sigma", m.l63.sigma);
    read_into(j, "rho", m.l63.rho);
    read_into(j, "beta", m.l63.beta);
  } else if (kind == "lorenz96") {
    m = ModelSpec::lorenz96();
    read_into(j, "n", m.l96.n);
    read_into(j, "forcing", m.l96.forcing);
  } else {
    throw ConfigError("config: model.kind must be lorenz63 or lorenz96");
  }
  read_into(j, "dt", m.dt);
  read_into(j, "steps_per_cycle", m.steps_per_cycle);
  return m;
}

FilterKind parse_filter_kind(const std::string& s) {
  if (s == "letkf") return FilterKind::LETKF;
  if (s == "lapf") return FilterKind::LAPF;
  if (s == "lmcpf") return FilterKind::LMCPF;
  throw ConfigError("config: filter.kind must be letkf, lapf or lmcpf");
}

const char* filter_kind_name(FilterKind k) {
  switch (k) {
    case FilterKind::LETKF: return "letkf";
    case FilterKind::LAPF: return "lapf";
    default: return "lmcpf";
  }
}

FilterConfig parse_filter(const json& j) {
  check_keys(j,
             {"kind", "kappa", "kappa_post", "c0", "c1", "rho0", "rho1",
              "smoothing_alpha", "localization", "exact_weights",
              "shared_noise", "qc_enabled", "qc_k", "rescue_floor",
              "rescue_amplitude"},
             "filter");
  FilterConfig f;
  std::string kind = "lmcpf";
  read_into(j, "kind", kind);
  f.kind = parse_filter_kind(kind);
  read_into(j, "kappa", f.kappa);
  read_into(j, "kappa_post", f.kappa_post);
  read_into(j, "c0", f.c0);
  read_into(j, "c1", f.c1);
  read_into(j, "rho0", f.rho0);
  read_into(j, "rho1", f.rho1);
  read_into(j, "smoothing_alpha", f.smoothing_alpha);
  read_into(j, "exact_weights", f.exact_weights);
  read_into(j, "shared_noise", f.shared_noise);
  read_into(j, "qc_enabled", f.qc_enabled);
  read_into(j, "qc_k", f.qc_k);
  read_into(j, "rescue_floor", f.rescue_floor);
  read_into(j, "rescue_amplitude", f.rescue_amplitude);
  if (j.contains("localization")) {
    const json& l = j.at("localization");
    check_keys(l, {"kind", "radius"}, "filter.localization");
    std::string lk = "gaspari_cohn";
    read_into(l, "kind", lk);
    if (lk == "gaspari_cohn")
      f.localization.kind = TaperKind::GaspariCohn;
    else if (lk == "boxcar")
      f.localization.kind = TaperKind::Boxcar;
    else if (lk == "none")
      f.localization.kind = TaperKind::None;
    else
      throw ConfigError(
          "config: localization.kind must be gaspari_cohn, boxcar or none");
    read_into(l, "radius", f.localization.radius);
  }
  return f;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

ExperimentConfig parse_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(j,
             {"model", "observations", "filter", "ensemble", "cycles",
              "spinup_cycles", "analysis_stride", "forecast_lead_cycles",
              "threads", "seed", "output_dir", "dump_matrices"},
             "top level");
  ExperimentConfig cfg;
  if (j.contains("model")) cfg.model = parse_model(j.at("model"));
  if (j.contains("observations")) {
    const json& o = j.at("observations");
    check_keys(o, {"stride", "offset", "err_var"}, "observations");
    read_into(o, "stride", cfg.obs.stride);
    read_into(o, "offset", cfg.obs.offset);
    read_into(o, "err_var", cfg.obs.err_var);
  }
  if (j.contains("filter")) cfg.filter = parse_filter(j.at("filter"));
  if (j.contains("ensemble")) {
    const json& e = j.at("ensemble");
    check_keys(e, {"size", "init", "init_spread"}, "ensemble");
    read_into(e, "size", cfg.ensemble_size);
    std::string init = "perturbed_truth";
    read_into(e, "init", init);
    if (init == "perturbed_truth")
      cfg.init = EnsembleInit::PerturbedTruth;
    else if (init == "identical_copies")
      cfg.init = EnsembleInit::IdenticalCopies;
    else
      throw ConfigError(
          "config: ensemble.init must be perturbed_truth or identical_copies");
    read_into(e, "init_spread", cfg.init_spread);
  }
  read_into(j, "cycles", cfg.cycles);
  read_into(j, "spinup_cycles", cfg.spinup_cycles);
  read_into(j, "analysis_stride", cfg.analysis_stride);
  read_into(j, "forecast_lead_cycles", cfg.forecast_leads);
  read_into(j, "threads", cfg.threads);
  read_into(j, "seed", cfg.seed);
  read_into(j, "output_dir", cfg.output_dir);
  read_into(j, "dump_matrices", cfg.dump_matrices);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_json(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json model;
  if (cfg.model.kind == ModelKind::Lorenz63) {
    model = {{"kind", "lorenz63"},
             {"sigma", cfg.model.l63.sigma},
             {"rho", cfg.model.l63.rho},
             {"beta", cfg.model.l63.beta}};
  } else {
    model = {{"kind", "lorenz96"},
             {"n", cfg.model.l96.n},
             {"forcing", cfg.model.l96.forcing}};
  }
  model["dt"] = cfg.model.dt;
  model["steps_per_cycle"] = cfg.model.steps_per_cycle;

  const char* taper = cfg.filter.localization.kind == TaperKind::GaspariCohn
                          ? "gaspari_cohn"
                          : cfg.filter.localization.kind == TaperKind::Boxcar
                                ? "boxcar"
                                : "none";
  json j = {
      {"model", model},
      {"observations",
       {{"stride", cfg.obs.stride},
        {"offset", cfg.obs.offset},
        {"err_var", cfg.obs.err_var}}},
      {"filter",
       {{"kind", filter_kind_name(cfg.filter.kind)},
        {"kappa", cfg.filter.kappa},
        {"kappa_post", cfg.filter.kappa_post},
        {"c0", cfg.filter.c0},
        {"c1", cfg.filter.c1},
        {"rho0", cfg.filter.rho0},
        {"rho1", cfg.filter.rho1},
        {"smoothing_alpha", cfg.filter.smoothing_alpha},
        {"localization", {{"kind", taper}, {"radius", cfg.filter.localization.radius}}},
        {"exact_weights", cfg.filter.exact_weights},
        {"shared_noise", cfg.filter.shared_noise},
        {"qc_enabled", cfg.filter.qc_enabled},
        {"qc_k", cfg.filter.qc_k},
        {"rescue_floor", cfg.filter.rescue_floor},
        {"rescue_amplitude", cfg.filter.rescue_amplitude}}},
      {"ensemble",
       {{"size", cfg.ensemble_size},
        {"init", cfg.init == EnsembleInit::PerturbedTruth
                     ? "perturbed_truth"
                     : "identical_copies"},
        {"init_spread", cfg.init_spread}}},
      {"cycles", cfg.cycles},
      {"spinup_cycles", cfg.spinup_cycles},
      {"analysis_stride", cfg.analysis_stride},
      {"forecast_lead_cycles", cfg.forecast_leads},
      {"threads", cfg.threads},
      {"seed", cfg.seed},
      {"output_dir", cfg.output_dir},
      {"dump_matrices", cfg.dump_matrices},
  };
  return j.dump(2) + "\n";
}

void ensure_output_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir);
}

void write_manifest(const ExperimentConfig& cfg, const std::string& path) {
  json j = {
      {"tool", "lmcpf"},
      {"version", kVersion},
      {"config", json::parse(config_to_json(cfg))},
  };
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
}

void write_cycle_scores(const ExperimentResult& result,
                        const std::string& path) {
  std::ofstream out = open_out(path);
  out << "cycle,rmse,bias,crps,spread_mean,spread_min,spread_max,"
         "d_c_mean,d_min_mean,shift_median,rho_mean,sigma_mean,"
         "n_obs,n_obs_kept\n";
  for (const CycleRecord& rec : result.records) {
    const CycleDiagnostics& d = rec.diag;
    out << rec.cycle << ',' << format_double(d.rmse) << ','
        << format_double(d.bias) << ',' << format_double(d.crps) << ','
        << format_double(d.spread.mean) << ',' << format_double(d.spread.min)
        << ',' << format_double(d.spread.max) << ','
        << format_double(d.d_c_mean) << ',' << format_double(d.d_min_mean)
        << ',' << format_double(d.shift_median) << ','
        << format_double(d.rho_mean) << ',' << format_double(d.sigma_mean)
        << ',' << d.n_obs << ',' << d.n_obs_kept << '\n';
  }
}

void write_point_diagnostics(const ExperimentResult& result,
                             const std::string& path) {
  std::ofstream out = open_out(path);
  out << "cycle,point,grid_pos,n_local_obs,rank,d_c,d_min,shift_norm,rho,"
         "sigma\n";
  for (const CycleRecord& rec : result.records) {
    for (const PointDiag& p : rec.points) {
      out << rec.cycle << ',' << p.point << ',' << format_double(p.grid_pos)
          << ',' << p.n_local_obs << ',' << p.rank << ','
          << format_double(p.d_c) << ',' << format_double(p.d_min) << ','
          << format_double(p.shift_norm) << ',' << format_double(p.rho) << ','
          << format_double(p.sigma) << '\n';
    }
  }
}

void write_final_state(const ExperimentResult& result,
                       const std::string& path) {
  if (result.records.empty()) throw Error("write_final_state: no cycles");
  const CycleRecord& rec = result.records.back();
  std::ofstream out = open_out(path);
  out << "# cycle=" << rec.cycle << "\n";
  out << "var,truth";
  for (int l = 0; l < rec.analysis.size(); ++l) out << ",member_" << l;
  out << "\n";
  for (int g = 0; g < rec.analysis.dim(); ++g) {
    out << g << ',' << format_double(rec.truth(g));
    for (int l = 0; l < rec.analysis.size(); ++l)
      out << ',' << format_double(rec.analysis.members(g, l));
    out << '\n';
  }
}

FinalState read_final_state(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# cycle=", 0) != 0)
    throw Error("final state file: missing \"# cycle=\" header");
  FinalState fs;
  fs.cycle = std::stoi(line.substr(8));
  if (!std::getline(in, line))
    throw Error("final state file: missing column header");
  const int ncols = 1 + static_cast<int>(std::count(line.begin(), line.end(), ','));
  const int L = ncols - 2;
  if (L < 2) throw Error("final state file: fewer than two members");

  std::vector<double> truth;
  std::vector<std::vector<double>> members;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<int>(row.size()) != ncols)
      throw Error("final state file: ragged row");
    truth.push_back(row[1]);
    members.emplace_back(row.begin() + 2, row.end());
  }
  const int n = static_cast<int>(truth.size());
  if (n == 0) throw Error("final state file: no state rows");
  fs.truth = Eigen::Map<Vector>(truth.data(), n);
  fs.ensemble.members.resize(n, L);
  for (int g = 0; g < n; ++g)
    for (int l = 0; l < L; ++l) fs.ensemble.members(g, l) = members[g][l];
  return fs;
}

void write_instance(const SavedInstance& instance, const std::string& path) {
  const int L = static_cast<int>(instance.A.rows());
  json a = json::array();
  for (int i = 0; i < L; ++i) {
    json row = json::array();
    for (int k = 0; k < L; ++k) row.push_back(instance.A(i, k));
    a.push_back(row);
  }
  json c = json::array();
  for (int i = 0; i < L; ++i) c.push_back(instance.C(i));
  json j = {{"cycle", instance.cycle}, {"point", instance.point},
            {"gamma", instance.gamma}, {"A", a},       {"C", c}};
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
}

SavedInstance read_instance(const std::string& path) {
  std::ifstream in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(std::string("instance file: invalid JSON: ") + e.what());
  }
  SavedInstance inst;
  inst.cycle = j.value("cycle", 0);
  inst.point = j.value("point", 0);
  inst.gamma = j.value("gamma", 0.0);
  const auto& a = j.at("A");
  const int L = static_cast<int>(a.size());
  inst.A.resize(L, L);
  for (int i = 0; i < L; ++i)
    for (int k = 0; k < L; ++k) inst.A(i, k) = a.at(i).at(k).get<double>();
  const auto& c = j.at("C");
  if (static_cast<int>(c.size()) != L)
    throw Error("instance file: C length disagrees with A");
  inst.C.resize(L);
  for (int i = 0; i < L; ++i) inst.C(i) = c.at(i).get<double>();
  return inst;
}

void write_weights_curve(const std::vector<WeightsCurveRow>& rows,
                         const std::string& path) {
  std::ofstream out = open_out(path);
  out << "kappa,member,weight_exact,weight_approx\n";
  for (const WeightsCurveRow& row : rows) {
    for (int l = 0; l < row.exact.size(); ++l) {
      out << format_double(row.kappa) << ',' << l << ','
          << format_double(row.exact(l)) << ',' << format_double(row.approx(l))
          << '\n';
    }
  }
}

void write_forecast_scores(const std::vector<ForecastRow>& rows,
                           const std::string& path) {
  std::ofstream out = open_out(path);
  out << "lead_cycles,launches,rmse,bias,crps\n";
  for (const ForecastRow& r : rows) {
    out << r.lead << ',' << r.launches << ',' << format_double(r.rmse) << ','
        << format_double(r.bias) << ',' << format_double(r.crps) << '\n';
  }
}

void write_histogram(const Histogram& hist, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "bin_left,bin_right,count\n";
  for (int b = 0; b < hist.bins(); ++b) {
    out << format_double(hist.edges[b]) << ','
        << format_double(hist.edges[b + 1]) << ',' << hist.counts[b] << '\n';
  }
}

void write_transform_dumps(const ExperimentResult& result,
                           const std::string& dir) {
  ensure_output_dir(dir);
  for (std::size_t k = 0; k < result.final_transforms.size(); ++k) {
    const Matrix& w = result.final_transforms[k];
    std::ofstream out = open_out(dir + "/W_point" + std::to_string(k) + ".csv");
    for (int i = 0; i < w.rows(); ++i) {
      for (int j = 0; j < w.cols(); ++j) {
        if (j) out << ',';
        out << format_double(w(i, j));
      }
      out << '\n';
    }
  }
}

ExperimentSummary run_and_write(const ExperimentConfig& cfg) {
  ExperimentResult result = run_cycle_experiment(cfg);
  const std::string& dir = cfg.output_dir;
  ensure_output_dir(dir);
  write_manifest(cfg, dir + "/manifest.json");
  write_cycle_scores(result, dir + "/cycle_scores.csv");
  write_point_diagnostics(result, dir + "/point_diagnostics.csv");
  write_final_state(result, dir + "/final_state.csv");
  if (result.instance) write_instance(*result.instance, dir + "/instance.json");
  if (!cfg.forecast_leads.empty())
    write_forecast_scores(run_forecasts(cfg, result),
                          dir + "/forecast_scores.csv");
  if (cfg.dump_matrices) write_transform_dumps(result, dir + "/matrices");
  return summarize(result.records, cfg.spinup_cycles);
}

}  // namespace lmcpf
