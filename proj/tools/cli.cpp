#include "cli.hpp"

#include "glhm/config.hpp"
#include "glhm/experiments.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>

namespace glhm::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::string field;
    std::string out = "out";
    std::optional<unsigned> seed;
    bool quiet = false;
};

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Context {
    RunConfig cfg;
    Options opt;

    void say(const std::string& s) const
    {
        if (!opt.quiet) std::cout << s << "\n";
    }

    void write(const std::string& sub, const std::string& name, const std::string& content) const
    {
        const fs::path dir = fs::path(opt.out) / sub;
        std::error_code ec;
        fs::create_directories(dir, ec);
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw IoError("cannot write " + (dir / name).string());
        f << content;
        if (!f) throw IoError("write failed for " + (dir / name).string());
    }

    void write_report(const ExperimentReport& rep) const
    {
        write("reports", rep.id + ".txt", rep.to_text());
        write("tables", rep.id + "_checks.csv", rep.checks_csv());
        for (const auto& [name, csv] : rep.tables) write("tables", name + ".csv", csv);
    }

    GridDomain domain() const
    {
        return GridDomain(cfg.integer("grid.m"), cfg.number("grid.extent"), cfg.integer("grid.n"));
    }

    SphereTargetd target() const { return SphereTargetd(cfg.number("target.gamma"), cfg.number("target.floor")); }

    KernelProfile kernel(int m) const { return build_kernel(cfg.number("kernel.R"), m); }

    VectorField field() const
    {
        if (opt.field.empty()) throw UsageError("this subcommand needs --field PATH");
        return read_field(opt.field);
    }

    double eps_of(const VectorField& u) const { return u.eps ? *u.eps : cfg.number("solver.eps"); }

    DecompConfig decomp() const
    {
        DecompConfig d;
        d.delta = cfg.number("decomp.delta");
        d.delta1 = cfg.number("decomp.delta1");
        d.delta2 = cfg.number("decomp.delta2");
        d.eps0 = cfg.number("decomp.eps0");
        d.lambda = cfg.number("decomp.lambda");
        d.spawn_c = cfg.number("decomp.spawn_c");
        d.sub_scale = cfg.number("decomp.sub_scale");
        d.vitali = cfg.number("decomp.vitali");
        d.cover_samples = cfg.integer("decomp.cover_samples");
        d.seed = opt.seed ? *opt.seed : static_cast<unsigned>(cfg.integer("experiment.seed"));
        return d;
    }

    //! experiment.points as m-vectors.
    std::vector<Vec> points(int m) const
    {
        const auto flat = cfg.list("experiment.points");
        if (flat.empty() || flat.size() % m != 0)
            throw ConfigError("experiment.points must hold a multiple of " + std::to_string(m) + " numbers");
        std::vector<Vec> pts;
        for (std::size_t i = 0; i < flat.size(); i += m) pts.push_back(Eigen::Map<const Vec>(flat.data() + i, m));
        return pts;
    }

    Projector tube_axis() const
    {
        const double t = cfg.number("experiment.tilt_deg") * std::numbers::pi / 180.0;
        Vec a(3);
        a << std::sin(t), 0.0, std::cos(t);
        return Projector::span({a}, 3);
    }
};

std::string fmt(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

VectorField make_fixture(const Context& c)
{
    const GridDomain d = c.domain();
    const std::string kind = c.cfg.get("experiment.fixture");
    const double sigma = c.cfg.number("experiment.sigma");
    const Vec origin = Vec::Zero(d.m);
    if (kind == "constant") return synth_constant(d, Eigen::Vector3d(0.0, 0.0, 1.0));
    if (kind == "bubble") {
        if (d.m == 2) return synth_bubble(d, origin, sigma, c.cfg.integer("experiment.degree"));
        return synth_bubble_tube(d, c.tube_axis(), sigma, origin);
    }
    if (kind == "two_bubble") {
        if (d.m != 2) throw ConfigError("two_bubble fixture is two-dimensional");
        Vec c2 = Vec::Zero(2);
        c2[0] = c.cfg.number("experiment.separation");
        return synth_two_bubble(d, origin, sigma, c2, c.cfg.number("experiment.sigma2"));
    }
    throw ConfigError("unknown experiment.fixture " + kind);
}

int cmd_solve(const Context& c)
{
    VectorField u = make_fixture(c);
    const double eps = c.cfg.number("solver.eps");
    const SphereTargetd target = c.target();
    std::ostringstream rep;
    rep << "solve\n" << c.cfg.emit();
    int status = 0;
    if (c.cfg.integer("solver.relax") != 0) {
        SolverConfig sc;
        sc.eps = eps;
        sc.tol = c.cfg.number("solver.tol");
        sc.max_iter = c.cfg.integer("solver.max_iter");
        sc.step_factor = c.cfg.number("solver.step_factor");
        sc.energy_interval = 1000;
        const int pin = c.cfg.integer("solver.pin");
        if (pin != 0) {
            const Projector axis = u.domain.m == 3 ? c.tube_axis() : Projector::zero(2);
            sc.frozen = ring_mask(u.domain, axis, Vec::Zero(u.domain.m), c.cfg.number("experiment.sigma"),
                                  static_cast<unsigned char>(pin));
        }
        const auto rr = relax(u, sc, target);
        u = rr.field;
        rep << "converged " << rr.converged << "\niterations " << rr.iterations << "\nresidual " << fmt(rr.residual)
            << "\nfrozen_residual " << fmt(rr.frozen_residual) << "\n";
        std::ostringstream trace;
        trace << "iteration,discrete_energy\n";
        for (const auto& [it, e] : rr.energy_trace) trace << it << "," << fmt(e) << "\n";
        c.write("tables", "solve_energy.csv", trace.str());
        if (!rr.converged) status = 1;
    }
    u.eps = eps;
    rep << "energy " << fmt(energy(u, eps, target)) << "\n";
    std::error_code ec;
    fs::create_directories(fs::path(c.opt.out) / "fields", ec);
    write_field(u, (fs::path(c.opt.out) / "fields" / "field.glhm").string());
    c.write("reports", "solve.txt", rep.str());
    c.say(rep.str());
    return status;
}

int cmd_density(const Context& c)
{
    const VectorField u = c.field();
    const FieldCache cache(u, c.eps_of(u), c.target());
    const KernelProfile k = c.kernel(cache.m());
    std::ostringstream tab;
    tab << density_csv_header(cache.m()) << "\n";
    ExperimentReport rep;
    rep.id = "density";
    int i = 0;
    for (const Vec& x : c.points(cache.m()))
        for (double r : c.cfg.list("experiment.radii")) {
            const auto p = density_probe(cache, k, x, r);
            tab << density_csv_row(p) << "\n";
            const double gap = std::abs(p.dtheta_formula - p.dtheta_fd);
            rep.add({"monotonicity probe " + std::to_string(i++), p.dtheta_formula, p.dtheta_fd, gap, 0.0, true,
                     false, "formula vs central difference"});
        }
    rep.tables.emplace_back("density", tab.str());
    c.write_report(rep);
    c.say(rep.to_text());
    return 0;
}

int cmd_plane(const Context& c)
{
    const VectorField u = c.field();
    const FieldCache cache(u, c.eps_of(u), c.target());
    const int m = cache.m();
    const KernelProfile k = c.kernel(m);
    std::ostringstream tab;
    for (int a = 0; a < m; ++a) tab << "x" << a + 1 << ",";
    tab << "r,theta_L,unique";
    for (int a = 0; a < m; ++a) tab << ",lambda" << a + 1;
    for (int a = 0; a < m * m; ++a) tab << ",P" << a / m + 1 << a % m + 1;
    tab << "\n";
    for (const Vec& x : c.points(m))
        for (double r : c.cfg.list("experiment.radii")) {
            const auto bp = best_plane(cache, k, x, r);
            for (int a = 0; a < m; ++a) tab << fmt(x[a]) << ",";
            tab << fmt(r) << "," << fmt(bp.theta_L) << "," << bp.unique;
            for (int a = 0; a < m; ++a) tab << "," << fmt(bp.q.eigenvalues[a]);
            const Mat P = bp.plane.matrix();
            for (int a = 0; a < m * m; ++a) tab << "," << fmt(P(a / m, a % m));
            tab << "\n";
        }
    c.write("tables", "plane.csv", tab.str());
    c.write("reports", "plane.txt", "plane\n" + c.cfg.emit());
    c.say(tab.str());
    return 0;
}

int cmd_decompose(const Context& c)
{
    const VectorField u = c.field();
    const FieldCache cache(u, c.eps_of(u), c.target());
    const KernelProfile k = c.kernel(cache.m());
    const Vec p = c.points(cache.m()).front();
    const auto tree = decompose(cache, k, p, c.cfg.number("decomp.root_radius"), c.decomp());
    c.write("reports", "decomposition.json", tree.to_json() + "\n");
    c.write("tables", "leaves.csv", tree.leaf_csv());
    std::ostringstream s;
    s << "decompose\nnodes " << tree.nodes.size() << "\nbubble " << tree.count(RegionKind::bubble) << "\nannular "
      << tree.count(RegionKind::annular) << "\nregular " << tree.count(RegionKind::regular) << "\njunk "
      << tree.count(RegionKind::junk) << "\nmax_depth " << tree.max_depth << "\ndepth_bound " << tree.depth_bound
      << "\njunk_volume " << fmt(tree.junk_volume) << "\ncover_fraction " << fmt(tree.cover_fraction) << "\n";
    c.write("reports", "decompose.txt", s.str());
    c.say(s.str());
    return tree.depth_exceeded ? 1 : 0;
}

int cmd_identity(const Context& c)
{
    IdentityConfig ic;
    ic.n = c.cfg.integer("grid.n");
    ic.extent = c.cfg.number("grid.extent");
    ic.eps = c.cfg.list("experiment.eps_schedule");
    ic.sigma_factor = c.cfg.number("experiment.sigma_factor");
    ic.constant = c.cfg.get("experiment.fixture") == "constant";
    ic.pin = static_cast<unsigned char>(c.cfg.integer("solver.pin"));
    ic.solver_tol = c.cfg.number("solver.tol");
    ic.max_iter = c.cfg.integer("solver.max_iter");
    ic.kernel_R = c.cfg.number("kernel.R");
    ic.decomp = c.decomp();
    ic.root_fraction = c.cfg.number("experiment.root_fraction");
    ic.slice_radius = c.cfg.number("experiment.slice_radius");
    ic.slice_offsets = c.cfg.list("experiment.slice_offsets");
    ic.energy_tolerance = c.cfg.number("experiment.tolerance");
    ic.slice_tolerance = c.cfg.number("experiment.tolerance");
    if (c.cfg.integer("grid.m") != 3) throw ConfigError("identity experiment needs grid.m = 3");
    const auto res = energy_identity_experiment(ic);
    std::error_code ec;
    fs::create_directories(fs::path(c.opt.out) / "fields", ec);
    for (std::size_t i = 0; i < res.rows.size(); ++i) {
        VectorField f = res.fields[i];
        f.eps = res.rows[i].eps;
        write_field(f, (fs::path(c.opt.out) / "fields" / ("identity_" + std::to_string(i) + ".glhm")).string());
        c.write("reports", "identity_tree_" + std::to_string(i) + ".json", res.rows[i].tree_json + "\n");
    }
    c.write_report(res.report);
    c.say(res.report.to_text());
    c.say("runtime " + fmt(res.report.runtime) + " s");
    return res.report.all_pass() ? 0 : 1;
}

int cmd_verify_kernel(const Context& c)
{
    const KernelReport rep = verify_kernel(c.kernel(c.cfg.integer("grid.m")));
    c.write("reports", "kernel.txt", rep.to_text());
    c.write("tables", "kernel.csv", rep.to_csv());
    c.say(rep.to_text());
    return rep.all_pass() ? 0 : 1;
}

int cmd_conformality(const Context& c)
{
    const VectorField u = c.field();
    const FieldCache cache(u, c.eps_of(u), c.target());
    const auto rep = conformality_check_2d(cache, c.points(cache.m()).front(), c.cfg.list("experiment.radii"),
                                           c.cfg.number("experiment.shell_width"),
                                           c.cfg.number("experiment.tolerance"));
    c.write_report(rep);
    c.say(rep.to_text());
    return rep.all_pass() ? 0 : 1;
}

int cmd_superconvexity(const Context& c)
{
    const VectorField u = c.field();
    const FieldCache cache(u, c.eps_of(u), c.target());
    const int m = cache.m();
    const Projector L = m == 3 ? c.tube_axis() : Projector::zero(2);
    Vec dir = Vec::Zero(m);
    if (m == 3) dir = L.basis().col(0);
    std::vector<SuperconvexityProbe> probes;
    const auto zs = m == 3 ? c.cfg.list("experiment.probe_z") : std::vector<double>{0.0};
    for (double z : zs)
        for (double s : c.cfg.list("experiment.probe_s")) probes.push_back({z * dir, s});
    SuperconvexityOptions so;
    so.slack = c.cfg.number("experiment.slack");
    so.delta = c.cfg.number("decomp.delta");
    const auto rep = angular_superconvexity_check(cache, L, probes, so);
    c.write_report(rep);
    c.say(rep.to_text());
    return rep.all_pass() ? 0 : 1;
}

} // namespace

int dispatch(int argc, char** argv)
{
    CLI::App app{"Ginzburg-Landau harmonic map laboratory"};
    app.require_subcommand(1);
    Options opt;
    app.add_option("--config", opt.config, "Run configuration file");
    app.add_option("--field", opt.field, "Field snapshot");
    app.add_option("--out", opt.out, "Output directory");
    app.add_option("--seed", opt.seed, "RNG seed");
    app.add_flag("--quiet", opt.quiet, "Suppress stdout");

    using Handler = int (*)(const Context&);
    const std::vector<std::pair<std::string, Handler>> cmds = {
        {"solve", cmd_solve},
        {"density", cmd_density},
        {"plane", cmd_plane},
        {"decompose", cmd_decompose},
        {"identity", cmd_identity},
        {"verify-kernel", cmd_verify_kernel},
        {"conformality", cmd_conformality},
        {"superconvexity", cmd_superconvexity},
    };
    for (const auto& [name, h] : cmds) app.add_subcommand(name, name)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        Context ctx;
        ctx.opt = opt;
        if (!opt.config.empty()) ctx.cfg = RunConfig::load(opt.config);
        if (opt.seed) ctx.cfg.set("experiment.seed", std::to_string(*opt.seed));
        for (const auto& [name, h] : cmds)
            if (app.got_subcommand(name)) {
                const auto t0 = std::chrono::steady_clock::now();
                const int status = h(ctx);
                ctx.say(name + " finished in " +
                        fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) + " s");
                return status;
            }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 2;
}

} // namespace glhm::cli
