// hitl: command-line front end (analysis, service, simulation, utilities).

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hitl/analysis.hpp"
#include "hitl/decimate.hpp"
#include "hitl/fixtures.hpp"
#include "hitl/mesh.hpp"
#include "hitl/render.hpp"
#include "hitl/server.hpp"
#include "hitl/simulation.hpp"

namespace {

hitl::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

hitl::TriangleMesh read_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw hitl::Error("cannot open " + path);
    return hitl::load_obj(in);
}

int analyze(const std::string& input, const std::string& out, double alpha) {
    std::ifstream in(input);
    if (!in) {
        std::cerr << "analyze: cannot open " << input << "\n";
        return 2;
    }
    std::vector<hitl::EvaluationSequence> corpus;
    try {
        corpus = hitl::read_sequences(in);
    } catch (const hitl::SchemaError& e) {
        std::cerr << "analyze: " << input << ": " << e.what() << "\n";
        return 3;
    }
    const auto report = hitl::corpus_report(corpus, alpha);
    hitl::write_report(report, out);
    std::cout << hitl::report_text(report);
    return 0;
}

int serve(const std::string& host, int port, std::size_t workers, std::size_t max_iterations,
          const std::string& data_dir, std::size_t max_upload_mb) {
    hitl::ServiceConfig cfg;
    cfg.data_dir = data_dir;
    if (workers) cfg.workers = workers;
    cfg.max_iterations = max_iterations;
    cfg.max_upload_bytes = max_upload_mb << 20;
    hitl::SessionStore store(cfg);
    hitl::Server server(store);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "listening on " << host << ":" << port << " (data: " << (data_dir.empty() ? "memory" : data_dir)
              << ", workers " << cfg.workers << ")\n";
    const bool ok = server.listen(host, port);
    g_server = nullptr;
    return ok ? 0 : 1;
}

int simulate(const std::string& config_dir, const std::string& out) {
    const auto seqs = hitl::run_experiment_dir(config_dir);
    std::ofstream file;
    std::ostream* os = &std::cout;
    if (!out.empty() && out != "-") {
        file.open(out, std::ios::binary | std::ios::trunc);
        os = &file;
    }
    hitl::write_sequences(*os, seqs);
    std::cerr << seqs.size() << " sequences\n";
    return 0;
}

int decimate_cmd(const std::string& input, const std::string& output, const std::vector<std::string>& settings) {
    const auto mesh = read_mesh(input);
    hitl::ReductionParams params;
    for (const auto& s : settings) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw hitl::Error("expected name=value, got '" + s + "'");
        const auto name = s.substr(0, eq);
        const double value = std::stod(s.substr(eq + 1));
        bool found = false;
        for (std::size_t i = 0; i < hitl::kParamCount; ++i)
            if (hitl::kSlotNames[i] == name) {
                params = params.with(static_cast<hitl::Slot>(i), value);
                found = true;
            }
        if (!found) throw hitl::Error("unknown parameter '" + name + "'");
    }
    const auto result = hitl::decimate(mesh, params);
    std::ofstream out(output);
    hitl::write_obj(out, result.mesh);
    std::cout << "faces " << mesh.face_count() << " -> " << result.mesh.face_count() << ", ratio "
              << result.reduction_ratio << ", flipped " << result.flipped_faces << (result.faulty ? " (faulty)" : "")
              << "\n";
    return 0;
}

int fixtures_cmd(const std::string& out_dir, bool small) {
    std::filesystem::create_directories(out_dir);
    for (auto name : hitl::fixtures::names()) {
        const auto mesh = small ? hitl::fixtures::small(name) : hitl::fixtures::standard(name);
        const auto path = std::filesystem::path(out_dir) / (std::string(name) + ".obj");
        std::ofstream out(path);
        hitl::write_obj(out, mesh);
        std::cout << path.string() << " " << mesh.face_count() << " faces\n";
    }
    return 0;
}

int render_cmd(const std::string& input, const std::string& out_prefix, int size) {
    const auto mesh = read_mesh(input);
    for (auto view : hitl::kCanonicalViews) {
        const auto path = out_prefix + "_" + std::string(hitl::view_name(view)) + ".pgm";
        std::ofstream out(path, std::ios::binary);
        hitl::write_pgm(out, hitl::render(mesh, view, size));
        std::cout << path << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Preference-guided polygon reduction: service, simulation and analysis"};
    app.require_subcommand(1);

    auto* an = app.add_subcommand("analyze", "Statistics report over exported evaluation sequences");
    std::string an_input, an_out;
    double alpha = 0.05;
    an->add_option("--input", an_input, "JSON-lines export")->required();
    an->add_option("--out", an_out, "Output directory")->required();
    an->add_option("--alpha", alpha, "Significance level")->check(CLI::Range(0.0, 1.0));

    auto* sv = app.add_subcommand("serve", "Run the HTTP loop service");
    std::string host = "127.0.0.1", data_dir;
    int port = 8080;
    std::size_t workers = 0, max_iterations = 11, max_upload_mb = 32;
    sv->add_option("--host", host)->envname("HITL_HOST");
    sv->add_option("--port", port)->envname("HITL_PORT");
    sv->add_option("--workers", workers, "Worker threads (0 = CPU count)")->envname("HITL_WORKERS");
    sv->add_option("--max-iterations", max_iterations)->envname("HITL_MAX_ITERATIONS")->check(CLI::PositiveNumber);
    sv->add_option("--data-dir", data_dir, "Event log and mesh store (empty = memory only)")->envname("HITL_DATA_DIR");
    sv->add_option("--max-upload-mb", max_upload_mb)->envname("HITL_MAX_UPLOAD_MB");

    auto* sim = app.add_subcommand("simulate", "Run simulated-rater experiments from a config directory");
    std::string sim_dir, sim_out;
    sim->add_option("--configs", sim_dir, "Directory of *.json rater configs")->required()->check(CLI::ExistingDirectory);
    sim->add_option("--out", sim_out, "JSON-lines output (default stdout)");

    auto* dec = app.add_subcommand("decimate", "Reduce one OBJ mesh");
    std::string dec_in, dec_out;
    std::vector<std::string> settings;
    dec->add_option("--input", dec_in)->required()->check(CLI::ExistingFile);
    dec->add_option("--output", dec_out)->required();
    dec->add_option("--set", settings, "Parameter override name=value (repeatable)");

    auto* fx = app.add_subcommand("fixtures", "Write the bundled procedural meshes as OBJ");
    std::string fx_out;
    bool fx_small = false;
    fx->add_option("--out", fx_out)->required();
    fx->add_flag("--small", fx_small, "Use the <= 500-face variants");

    auto* rd = app.add_subcommand("render", "Render the five canonical views as PGM");
    std::string rd_in, rd_prefix;
    int rd_size = hitl::kQualityResolution;
    rd->add_option("--input", rd_in)->required()->check(CLI::ExistingFile);
    rd->add_option("--prefix", rd_prefix)->required();
    rd->add_option("--size", rd_size);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*an) return analyze(an_input, an_out, alpha);
        if (*sv) return serve(host, port, workers, max_iterations, data_dir, max_upload_mb);
        if (*sim) return simulate(sim_dir, sim_out);
        if (*dec) return decimate_cmd(dec_in, dec_out, settings);
        if (*fx) return fixtures_cmd(fx_out, fx_small);
        if (*rd) return render_cmd(rd_in, rd_prefix, rd_size);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
