#include "tdcosim/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "tdcosim/io.hpp"

namespace tdcosim::cli {

namespace {

struct Prepared {
  TransmissionCase physical;  ///< MW / ohm-or-pu as loaded, feeders attached
  TransmissionCase pu;
  std::vector<PccFeeder> feeders;
  LoadshapeSet shapes;
};

// Aggregate used when a synthetic feeder replaces a bus without lumped load.
constexpr Complex kDefaultFeederLoad{52.1, 11.7};

Complex lumped_load_mva(const TransmissionCase& c, BusId bus) {
  const double k = c.power_unit == PowerUnit::PerUnit ? c.base_mva : 1.0;
  Complex s{};
  bool found = false;
  for (const auto& l : c.loads) {
    if (l.bus != bus) continue;
    if (const auto* lumped = std::get_if<LumpedLoad>(&l.kind)) {
      s += Complex{lumped->p, lumped->q} * k;
      found = true;
    }
  }
  return found ? s : kDefaultFeederLoad;
}

int synth_nodes(const std::string& source) {
  const std::string n = source.substr(6);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(n.data(), n.data() + n.size(), v);
  if (ec != std::errc() || ptr != n.data() + n.size() || v < 2) {
    throw InputError("bad synthetic feeder '" + source + "': expected synth:N with N >= 2");
  }
  return v;
}

void throw_violations(const std::string& what, const std::vector<Violation>& v) {
  std::string msg = what + ": " + v.front().what;
  if (v.size() > 1) msg += " (and " + std::to_string(v.size() - 1) + " more)";
  throw InputError(msg);
}

Prepared prepare(const RunConfig& cfg) {
  if (cfg.case_path.empty()) throw InputError("--case is required");
  if (!(cfg.eps > 0.0)) throw InputError("--eps must be positive");
  if (cfg.max_rounds < 1) throw InputError("--max-rounds must be at least 1");
  const io::CaseDocument doc = io::load_case(cfg.case_path);
  if (const auto v = validate_case(doc.transmission); !v.empty()) throw_violations(cfg.case_path.string(), v);

  Prepared p;
  for (const auto& path : cfg.loadshapes) {
    LoadshapeSeries s = io::load_loadshape(path);
    const std::string id = s.id;
    p.shapes.shapes[id] = std::move(s);
  }
  if (p.shapes.shapes.size() == 1) p.shapes.default_id = p.shapes.shapes.begin()->first;

  std::vector<FeederArg> args = cfg.feeders;
  // Feeders named in the case file resolve next to it unless given explicitly.
  for (const auto& fb : doc.feeder_attachments) {
    const bool given = std::any_of(args.begin(), args.end(), [&fb](const FeederArg& a) { return a.bus == fb.bus; });
    if (!given) args.push_back({(cfg.case_path.parent_path() / (fb.feeder_id + ".td")).string(), fb.bus});
  }

  const TransmissionCase& c = doc.transmission;
  for (const auto& a : args) {
    if (c.bus_index(a.bus) < 0) throw InputError("feeder bound to unknown bus " + std::to_string(a.bus));
    PccFeeder pf;
    pf.bus = a.bus;
    if (a.source.rfind("synth:", 0) == 0) {
      SynthFeederSpec spec;
      spec.nodes = synth_nodes(a.source);
      spec.total_load = lumped_load_mva(c, a.bus);
      spec.mix = SynthConfig{}.mix;
      spec.seed = cfg.seed;
      spec.id = "synth_bus" + std::to_string(a.bus);
      pf.feeder = synth_feeder(spec);
    } else {
      pf.feeder = io::load_feeder(a.source);
    }
    for (const auto& fb : doc.feeder_attachments) {
      if (fb.bus == a.bus) pf.loadshape_id = fb.loadshape_id;
    }
    if (pf.loadshape_id && !p.shapes.shapes.count(*pf.loadshape_id)) {
      throw InputError("feeder at bus " + std::to_string(a.bus) + " uses loadshape '" + *pf.loadshape_id +
                       "' which was not given with --loadshape");
    }
    if (cfg.alpha != 0.0) pf.feeder = apply_unbalance(pf.feeder, cfg.alpha);
    p.feeders.push_back(std::move(pf));
  }
  for (const auto& l : c.loads) {
    if (l.loadshape_id && !p.shapes.shapes.count(*l.loadshape_id)) {
      throw InputError("load at bus " + std::to_string(l.bus) + " uses loadshape '" + *l.loadshape_id +
                       "' which was not given with --loadshape");
    }
  }
  p.physical = attach_feeders(c, p.feeders);
  p.pu = to_per_unit(p.physical);
  return p;
}

CouplingOptions coupling_options(const RunConfig& cfg) {
  CouplingOptions opt;
  opt.eps = cfg.eps;
  opt.max_rounds = cfg.max_rounds;
  opt.execution = cfg.serial ? FeederExecution::Serial : FeederExecution::Parallel;
  opt.threads = cfg.jobs;
  return opt;
}

std::vector<Generator> generators_mw(const TransmissionCase& c) {
  if (c.power_unit == PowerUnit::MW) return c.generators;
  return to_physical(c).generators;
}

std::string fixed(double v, int digits = 6) {
  if (!std::isfinite(v)) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

void print_trace(std::ostream& out, const CouplingTrace& trace, double eps) {
  for (std::size_t k = 0; k < trace.pccs.size(); ++k) {
    const BusId bus = trace.pccs[k];
    out << "PCC bus " << bus << " (eps " << eps << " pu)\n";
    out << std::left << std::setw(6) << "iter" << std::setw(14) << "side" << std::right << std::setw(11) << "|Va|"
        << std::setw(11) << "|Vb|" << std::setw(11) << "|Vc|" << std::setw(13) << "max|dV|" << "\n";
    for (const auto& r : trace.rounds) {
      if (r.pcc != bus) continue;
      out << std::left << std::setw(6) << r.iteration << std::setw(14) << "transmission" << std::right;
      for (double v : r.v_transmission) out << std::setw(11) << fixed(v);
      out << std::setw(13) << (std::isfinite(r.mismatch) ? fixed(r.mismatch, 8) : std::string("-")) << "\n";
      out << std::left << std::setw(6) << "" << std::setw(14) << "distribution" << std::right;
      for (double v : r.v_distribution) out << std::setw(11) << fixed(v);
      out << "\n";
    }
    if (trace.converged) out << "N(bus " << bus << ") = " << trace.iterations_to_converge[k] << "\n";
    out << "\n";
  }
  if (trace.converged) out << "overall N = " << trace.overall_iterations << "\n";
}

void report_written(std::ostream& out, const std::vector<std::filesystem::path>& files) {
  for (const auto& f : files) out << "wrote " << f.string() << "\n";
}

// First token outside comments and blank lines.
std::string first_keyword(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream words(line);
    std::string w;
    if (words >> w) return w;
  }
  return {};
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const NumericalError& e) {
    err << "not converged: " << e.what() << "\n";
    return kNotConverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
}

}  // namespace

FeederArg parse_feeder_arg(const std::string& text) {
  const auto at = text.rfind('@');
  if (at == std::string::npos || at == 0 || at + 1 == text.size()) {
    throw InputError("feeder must be given as PATH@BUS or synth:N@BUS, got '" + text + "'");
  }
  const std::string bus = text.substr(at + 1);
  FeederArg a;
  a.source = text.substr(0, at);
  const auto [ptr, ec] = std::from_chars(bus.data(), bus.data() + bus.size(), a.bus);
  if (ec != std::errc() || ptr != bus.data() + bus.size()) {
    throw InputError("feeder bus must be an integer, got '" + bus + "'");
  }
  return a;
}

int cmd_snapshot(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Prepared p = prepare(cfg);
    if (p.feeders.empty()) throw InputError("snapshot needs at least one --feeder");
    std::optional<DispatchRecord> dispatched;
    if (!cfg.no_dispatch) {
      const std::vector<Generator> gens = generators_mw(p.physical);
      const double demand = forecast_demand(p.physical, p.feeders, LoadshapeSet{}, cfg.start_min);
      dispatched = DispatchRecord{cfg.start_min, demand, dispatch(gens, demand)};
      out << "dispatch: demand " << fixed(demand, 3) << " MW, lambda " << fixed(dispatched->result.lambda, 4) << "\n";
    }
    const CouplingOptions opt = coupling_options(cfg);
    io::ResultBundle bundle;
    bundle.generators = generators_mw(p.physical);
    bundle.snapshot_minute = cfg.start_min;
    if (dispatched) bundle.snapshot_dispatch = &*dispatched;
    try {
      const StepResult sr = couple_step(p.pu, p.feeders, dispatched ? &dispatched->result : nullptr, opt);
      print_trace(out, sr.trace, cfg.eps);
      bundle.snapshot = &sr;
      if (!cfg.out_dir.empty()) report_written(out, io::write_results(bundle, cfg.out_dir));
      return static_cast<int>(kOk);
    } catch (const CouplingError& e) {
      print_trace(out, e.trace(), cfg.eps);
      StepResult partial;
      partial.trace = e.trace();
      bundle.snapshot = &partial;
      if (!cfg.out_dir.empty()) report_written(out, io::write_results(bundle, cfg.out_dir));
      err << "not converged: " << e.what() << "\n";
      return static_cast<int>(kNotConverged);
    }
  });
}

int cmd_timeseries(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (cfg.horizon_min <= 0) throw InputError("--horizon must be positive");
    const Prepared p = prepare(cfg);
    TimeseriesOptions opt;
    opt.start_min = cfg.start_min;
    opt.horizon_min = cfg.horizon_min;
    opt.ed_interval_min = cfg.ed_interval_min;
    opt.pf_interval_min = cfg.pf_interval_min;
    opt.coupling = coupling_options(cfg);
    opt.on_fail = cfg.on_fail;

    const CosimResult coupled = run_timeseries(p.pu, p.feeders, p.shapes, opt);
    out << "coupled: " << coupled.steps.size() << " steps, " << coupled.converged_steps() << " converged, "
        << coupled.dispatches.size() << " dispatches, mean step " << fixed(coupled.mean_step_seconds(), 4) << " s\n";
    for (const auto& s : coupled.steps) {
      if (!s.converged) err << "minute " << s.minute << ": " << s.error << "\n";
    }

    io::ResultBundle bundle;
    bundle.generators = generators_mw(p.physical);
    bundle.result = &coupled;
    std::vector<std::filesystem::path> written;
    if (!cfg.out_dir.empty()) written = io::write_results(bundle, cfg.out_dir);

    bool ok = coupled.converged_steps() == coupled.steps.size() && !coupled.aborted;
    if (cfg.decoupled) {
      const CosimResult base = run_decoupled_baseline(p.pu, p.feeders, p.shapes, opt);
      const Comparison cmp = compare_runs(coupled, base);
      out << "decoupled: " << base.steps.size() << " solves, max |d|V|| at common minutes "
          << std::setprecision(6) << cmp.max_abs_diff_common << " pu\n";
      ok = ok && base.converged_steps() == base.steps.size();
      if (!cfg.out_dir.empty()) {
        io::ResultBundle b2;
        b2.generators = bundle.generators;
        b2.result = &base;
        b2.comparison = &cmp;
        const auto more = io::write_results(b2, cfg.out_dir);
        written.insert(written.end(), more.begin(), more.end());
      }
    }
    report_written(out, written);
    return static_cast<int>(ok ? kOk : kNotConverged);
  });
}

int cmd_sweep_unbalance(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (cfg.alphas.empty()) throw InputError("--alphas needs at least one value");
    RunConfig base = cfg;
    base.alpha = 0.0;
    const Prepared p = prepare(base);
    if (p.feeders.empty()) throw InputError("sweep-unbalance needs at least one --feeder");
    const UnbalanceTable table = sweep_unbalance(p.pu, p.feeders, cfg.alphas, coupling_options(cfg));

    out << std::left << std::setw(8) << "alpha" << std::right;
    for (BusId b : table.pccs) out << std::setw(12) << ("N(bus " + std::to_string(b) + ")");
    out << std::setw(10) << "overall" << "\n";
    bool ok = true;
    for (const auto& row : table.rows) {
      out << std::left << std::setw(8) << fixed(row.alpha, 2) << std::right;
      for (int n : row.iterations) out << std::setw(12) << (n < 0 ? std::string("fail") : std::to_string(n));
      out << std::setw(10) << (row.overall < 0 ? std::string("fail") : std::to_string(row.overall)) << "\n";
      if (!row.error.empty()) {
        err << "alpha " << row.alpha << ": " << row.error << "\n";
        ok = false;
      }
    }
    if (!cfg.out_dir.empty()) {
      io::ResultBundle bundle;
      bundle.table = &table;
      report_written(out, io::write_results(bundle, cfg.out_dir));
    }
    return static_cast<int>(ok ? kOk : kNotConverged);
  });
}

int cmd_validate(const std::vector<std::filesystem::path>& paths, std::ostream& out, std::ostream& err) {
  if (paths.empty()) {
    err << "error: validate needs at least one file\n";
    return kInputError;
  }
  bool clean = true;
  for (const auto& path : paths) {
    try {
      const std::string text = io::read_file(path);
      const std::string head = first_keyword(text);
      if (head == "tdcase") {
        const io::CaseDocument doc = io::load_case(path);
        const auto v = validate_case(doc.transmission);
        for (const auto& x : v) err << path.string() << ": " << x.what << "\n";
        if (!v.empty()) {
          clean = false;
          continue;
        }
      } else if (head == "tdfeeder") {
        io::load_feeder(path);
      } else if (path.extension() == ".csv") {
        io::load_loadshape(path);
      } else {
        throw ParseError(path.string(), 1, 1, "unrecognized file: expected a 'tdcase' or 'tdfeeder' header or a .csv loadshape");
      }
      out << path.string() << ": ok\n";
    } catch (const std::exception& e) {
      err << e.what() << "\n";
      clean = false;
    }
  }
  return clean ? kOk : kInputError;
}

int cmd_synth(const SynthConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    SynthFeederSpec spec;
    spec.nodes = cfg.nodes;
    spec.total_load = {cfg.p_mw, cfg.q_mvar};
    spec.base_kv = cfg.base_kv;
    spec.mix = cfg.mix;
    spec.seed = cfg.seed;
    spec.id = cfg.id;
    Feeder f = synth_feeder(spec);
    if (cfg.alpha != 0.0) f = apply_unbalance(f, cfg.alpha);
    std::string text = "# synthetic feeder: nodes=" + std::to_string(cfg.nodes) + " seed=" + std::to_string(cfg.seed) +
                       " load=" + io::format_number(cfg.p_mw) + "," + io::format_number(cfg.q_mvar) + " MVA\n";
    text += io::serialize_feeder(f);
    if (cfg.output.empty()) {
      out << text;
    } else {
      std::ofstream os(cfg.output, std::ios::binary | std::ios::trunc);
      if (!os) throw InputError("cannot write " + cfg.output.string());
      os << text;
      out << "wrote " << cfg.output.string() << " (" << f.nodes.size() << " nodes)\n";
    }
    return static_cast<int>(kOk);
  });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Iterative transmission-distribution co-simulation"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::vector<std::string> feeder_args;
  std::string on_fail = "abort";
  std::string case_path;
  std::vector<std::string> loadshapes;
  std::string out_dir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--case", case_path, "transmission case file")->required();
    sub->add_option("--feeder", feeder_args, "feeder as PATH@BUS or synth:N@BUS (repeatable)");
    sub->add_option("--loadshape", loadshapes, "loadshape CSV; the id is the file stem (repeatable)");
    sub->add_option("--eps", cfg.eps, "coupling tolerance, pu")->check(CLI::PositiveNumber);
    sub->add_option("--max-rounds", cfg.max_rounds, "coupling round limit")->check(CLI::PositiveNumber);
    sub->add_option("--seed", cfg.seed, "seed for synthetic feeders");
    sub->add_option("--jobs", cfg.jobs, "feeder solver threads (TDCOSIM_JOBS overrides)");
    sub->add_flag("--serial", cfg.serial, "solve feeders serially");
    sub->add_option("--out", out_dir, "output directory for CSV artifacts");
  };

  CLI::App* snap = app.add_subcommand("snapshot", "one coupled solve at a fixed instant");
  add_common(snap);
  snap->add_option("--alpha", cfg.alpha, "load unbalance applied to every feeder")->check(CLI::Range(0.0, 0.5));
  snap->add_option("--start", cfg.start_min, "minute label of the snapshot");
  snap->add_flag("--no-dispatch", cfg.no_dispatch, "keep generator setpoints from the case");

  CLI::App* ts = app.add_subcommand("timeseries", "coupled time-series run");
  add_common(ts);
  ts->add_option("--start", cfg.start_min, "first minute");
  ts->add_option("--horizon", cfg.horizon_min, "window length, minutes");
  ts->add_option("--ed-interval", cfg.ed_interval_min, "dispatch interval, minutes");
  ts->add_option("--pf-interval", cfg.pf_interval_min, "coupled power-flow interval, minutes");
  ts->add_option("--on-fail", on_fail, "abort or continue after a failed step")
      ->check(CLI::IsMember({"abort", "continue"}));
  ts->add_flag("--decoupled", cfg.decoupled, "also run the decoupled baseline and compare");

  CLI::App* sw = app.add_subcommand("sweep-unbalance", "coupling iterations across unbalance levels");
  add_common(sw);
  sw->add_option("--alphas", cfg.alphas, "comma-separated unbalance levels")->delimiter(',');

  std::vector<std::string> validate_paths;
  CLI::App* val = app.add_subcommand("validate", "parse and check case, feeder and loadshape files");
  val->add_option("paths", validate_paths, "files to check")->required();

  SynthConfig synth;
  std::string synth_out;
  std::vector<double> mix;
  CLI::App* syn = app.add_subcommand("synth", "write a synthetic radial feeder");
  syn->add_option("--nodes", synth.nodes, "node count")->check(CLI::Range(2, 1000000));
  syn->add_option("--p", synth.p_mw, "total active load, MW");
  syn->add_option("--q", synth.q_mvar, "total reactive load, MVAr");
  syn->add_option("--kv", synth.base_kv, "line-to-line base voltage, kV")->check(CLI::PositiveNumber);
  syn->add_option("--mix", mix, "load-point fractions three,two,single phase")->delimiter(',')->expected(3);
  syn->add_option("--seed", synth.seed, "random seed");
  syn->add_option("--alpha", synth.alpha, "load unbalance")->check(CLI::Range(0.0, 0.5));
  syn->add_option("--id", synth.id, "feeder id");
  syn->add_option("--out", synth_out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  if (const char* env = std::getenv("TDCOSIM_JOBS"); env && *env) {
    int jobs = 0;
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), jobs);
    if (ec != std::errc() || ptr != s.data() + s.size() || jobs < 1) {
      err << "error: TDCOSIM_JOBS must be a positive integer\n";
      return kInputError;
    }
    cfg.jobs = jobs;
  }

  try {
    cfg.case_path = case_path;
    cfg.out_dir = out_dir;
    for (const auto& l : loadshapes) cfg.loadshapes.emplace_back(l);
    for (const auto& f : feeder_args) cfg.feeders.push_back(parse_feeder_arg(f));
    cfg.on_fail = on_fail == "continue" ? FailPolicy::Continue : FailPolicy::Abort;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  if (*snap) return cmd_snapshot(cfg, out, err);
  if (*ts) return cmd_timeseries(cfg, out, err);
  if (*sw) return cmd_sweep_unbalance(cfg, out, err);
  if (*val) {
    std::vector<std::filesystem::path> paths(validate_paths.begin(), validate_paths.end());
    return cmd_validate(paths, out, err);
  }
  if (!mix.empty()) synth.mix = {mix[0], mix[1], mix[2]};
  synth.output = synth_out;
  return cmd_synth(synth, out, err);
}

}  // namespace tdcosim::cli
