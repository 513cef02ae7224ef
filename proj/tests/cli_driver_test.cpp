// Drives the installed CLI binary end to end: records replay fixtures
// in-process through a scripted transport, then spawns the real executable
// against them and checks artifacts, stdout, and exit codes (0 success,
// 1 runtime failure, 2 usage error).

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "ctikg/core.hpp"
#include "ctikg/gateway.hpp"
#include "ctikg/pipeline.hpp"
#include "ctikg/prompt.hpp"

#include "support/scripted_backend.hpp"

using namespace ctikg;
using ctikg::testing::ScriptedTransport;
using ctikg::testing::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void check(bool ok, const std::string& what, const std::string& context = "") {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << what << "\n";
    if (!ok) {
        ++g_failures;
        if (!context.empty())
            std::cout << "       " << context << "\n";
    }
}

struct CliResult {
    int code = -1;
    std::string output; // stdout and stderr interleaved
};

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'')
            out += "'\\''";
        else
            out.push_back(c);
    }
    out += "'";
    return out;
}

CliResult run_cli(const std::vector<std::string>& args) {
    std::string command = shell_quote(CTIKG_BIN_PATH);
    for (const auto& arg : args)
        command += " " + shell_quote(arg);
    command += " 2>&1";

    CliResult result;
    FILE* pipe = popen(command.c_str(), "r");
    if (!pipe) {
        result.output = "popen failed";
        return result;
    }
    std::array<char, 4096> buffer{};
    std::size_t n = 0;
    while ((n = fread(buffer.data(), 1, buffer.size(), pipe)) > 0)
        result.output.append(buffer.data(), n);
    const int status = pclose(pipe);
    result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
}

// Single directory entry of a run root (the run id is content-derived, so
// the test discovers it rather than recomputing it).
fs::path only_subdir(const fs::path& root) {
    fs::path found;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) {
            if (!found.empty())
                return {};
            found = entry.path();
        }
    return found;
}

json tag(const std::string& s, const std::string& st, const std::string& r, const std::string& o,
         const std::string& ot) {
    return json{{"subject", json{{"text", s}, {"type", st}}},
                {"relation", r},
                {"object", json{{"text", o}, {"type", ot}}}};
}

const std::string kReportText =
    "Alphaware encrypts alpha files and drops a Alphaware note while AlphaKit spreads "
    "through mail.";

std::unique_ptr<ScriptedTransport> make_transport() {
    auto t = std::make_unique<ScriptedTransport>();
    t->add_completion(
        "between \"AlphaKit\" and \"Alphaware\"",
        json{{"subject", "AlphaKit"}, {"relation", "supports"}, {"object", "Alphaware"}}.dump());
    t->add_completion_all(
        {"mirroring the input order", "\"Alphaware\""},
        json::array({tag("Alphaware", "Malware", "encrypts", "alpha files", "Information"),
                     tag("Alphaware", "Malware", "drops", "Alphaware note", "Information"),
                     tag("AlphaKit", "Malware", "spreads through", "mail", "Information")})
            .dump());
    t->add_completion_all(
        {"each carrying exactly the keys", kReportText},
        json::array(
            {json{{"subject", "Alphaware"}, {"relation", "encrypts"}, {"object", "alpha files"}},
             json{{"subject", "Alphaware"}, {"relation", "drops"}, {"object", "Alphaware note"}},
             json{{"subject", "AlphaKit"},
                  {"relation", "spreads through"},
                  {"object", "mail"}}})
            .dump());
    t->set_axis_embedding("alpha files", 1);
    t->set_axis_embedding("mail", 3);
    t->set_axis_embedding("Alphaware note", 5);
    t->set_axis_embedding("Alphaware", 7);
    t->set_axis_embedding("AlphaKit", 9);
    return t;
}

} // namespace

int main() {
    TempDir work("ctikg-cli");
    const fs::path reports_path = work.path() / "reports.jsonl";
    const fs::path ontology_path = work.path() / "ontology.json";
    const fs::path gold_path = work.path() / "gold.json";
    const fs::path cache = work.path() / "cache";
    const fs::path empty_cache = work.path() / "empty-cache";
    fs::create_directories(cache);
    fs::create_directories(empty_cache);

    write_file(reports_path, json{{"id", "r1"}, {"text", kReportText}}.dump() + "\n");
    write_file(ontology_path, json{{"name", "MiniOnt"},
                                   {"entity_types", json::array({json{{"label", "Malware"}},
                                                                 json{{"label", "Information"}}})},
                                   {"fallback_type", "Information"}}
                                      .dump(2) +
                                  "\n");
    write_file(gold_path,
               json{{"report_id", "r1"},
                    {"triplets",
                     json::array({json{{"subject", "Alphaware"},
                                       {"relation", "encrypts"},
                                       {"object", "alpha files"}},
                                  json{{"subject", "Alphaware"},
                                       {"relation", "drops"},
                                       {"object", "Alphaware note"}},
                                  json{{"subject", "AlphaKit"},
                                       {"relation", "spreads through"},
                                       {"object", "mail"}}})},
                    {"inferred_relations", json::array({json{{"subject", "AlphaKit"},
                                                             {"relation", "supports"},
                                                             {"object", "Alphaware"}}})}}
                   .dump(2) +
                   "\n");

    // Record the fixtures the CLI will replay, using the same loaders, the
    // same built-in templates, and the same effective configuration as the
    // flag set passed below (k = 0 everywhere, defaults otherwise).
    {
        const auto reports = load_reports_jsonl(reports_path.string());
        std::ifstream in(ontology_path);
        json oj;
        in >> oj;
        const Ontology ontology = Ontology::from_json(oj);
        PipelineConfig config;
        config.k_extract = 0;
        config.k_typing = 0;
        config.k_relation = 0;
        Gateway gw(GatewayMode::record, BackendConfig{}, cache, make_transport());
        TempDir record_out("ctikg-cli-record");
        RunOptions options;
        options.mode = GatewayMode::record;
        options.out_root = record_out.path();
        run_pipeline(reports, ontology, config, PromptTemplateSet::builtin(), {}, gw, options);
    }

    // --- usage errors ------------------------------------------------------

    const CliResult help = run_cli({"--help"});
    check(help.code == 0 && contains(help.output, "pipeline"), "--help exits 0", help.output);

    const CliResult no_sub = run_cli({});
    check(no_sub.code == 2, "missing subcommand exits 2", no_sub.output);

    const CliResult bad_flag = run_cli({"pipeline", reports_path.string(), "--no-such-flag"});
    check(bad_flag.code == 2, "unknown flag exits 2", bad_flag.output);

    const CliResult bad_perm =
        run_cli({"pipeline", reports_path.string(), "--ontology", ontology_path.string(),
                 "--permutation", "bogus"});
    check(bad_perm.code == 2, "invalid permutation exits 2", bad_perm.output);

    const CliResult no_ontology =
        run_cli({"pipeline", reports_path.string(), "--ontology",
                 (work.path() / "missing.json").string(), "--backend", "replay", "--cache-dir",
                 cache.string(), "--out", (work.path() / "out-noont").string(), "--k", "0",
                 "--k-typing", "0", "--k-relation", "0"});
    check(no_ontology.code == 2 && contains(no_ontology.output, "cannot open file"),
          "missing ontology file exits 2 naming the file", no_ontology.output);

    // kNN extraction demos with no corpus: rejected before any backend call
    const CliResult knn_no_corpus =
        run_cli({"pipeline", reports_path.string(), "--ontology", ontology_path.string(),
                 "--backend", "replay", "--cache-dir", cache.string(), "--out",
                 (work.path() / "out-knn").string()});
    check(knn_no_corpus.code == 2 && contains(knn_no_corpus.output, "corpus has none"),
          "kNN demo mode without a corpus exits 2", knn_no_corpus.output);

    // --- pipeline happy path over replay fixtures ---------------------------

    const fs::path out_pipeline = work.path() / "out-pipeline";
    const CliResult pipeline =
        run_cli({"pipeline", reports_path.string(), "--ontology", ontology_path.string(),
                 "--backend", "replay", "--cache-dir", cache.string(), "--out",
                 out_pipeline.string(), "--k", "0", "--k-typing", "0", "--k-relation", "0",
                 "--export", "dot"});
    check(pipeline.code == 0, "pipeline replay exits 0", pipeline.output);
    check(contains(pipeline.output, "r1: 5 nodes, 4 edges"), "pipeline reports graph size",
          pipeline.output);

    const fs::path run_dir = only_subdir(out_pipeline);
    check(!run_dir.empty(), "pipeline created exactly one run directory");
    for (const char* name : {"manifest.json", "usage_log.json"})
        check(fs::exists(run_dir / name), std::string("run has ") + name);
    for (const char* name : {"extraction.json", "typed.json", "clusters.json",
                             "completion_meta.json", "graph.json", "graph.dot"})
        check(fs::exists(run_dir / "r1" / name), std::string("report has ") + name);
    check(!fs::exists(run_dir / "r1" / "graph.graphml"),
          "graphml is not written unless requested");

    // rerunning into the same directory requires --force
    const CliResult rerun =
        run_cli({"pipeline", reports_path.string(), "--ontology", ontology_path.string(),
                 "--backend", "replay", "--cache-dir", cache.string(), "--out",
                 out_pipeline.string(), "--k", "0", "--k-typing", "0", "--k-relation", "0"});
    check(rerun.code == 2 && contains(rerun.output, "--force"),
          "existing run directory exits 2 suggesting --force", rerun.output);

    const CliResult forced =
        run_cli({"pipeline", reports_path.string(), "--ontology", ontology_path.string(),
                 "--backend", "replay", "--cache-dir", cache.string(), "--out",
                 out_pipeline.string(), "--k", "0", "--k-typing", "0", "--k-relation", "0",
                 "--force"});
    check(forced.code == 0, "--force reuses the run directory", forced.output);

    // --- extract subcommand --------------------------------------------------

    const fs::path out_extract = work.path() / "out-extract";
    const CliResult extract =
        run_cli({"extract", reports_path.string(), "--ontology", ontology_path.string(),
                 "--backend", "replay", "--cache-dir", cache.string(), "--out",
                 out_extract.string(), "--k", "0"});
    check(extract.code == 0 && contains(extract.output, "r1: 3 triplets"),
          "extract replay exits 0 with three triplets", extract.output);
    const fs::path extract_dir = only_subdir(out_extract);
    check(!extract_dir.empty() && fs::exists(extract_dir / "r1" / "extraction.json") &&
              fs::exists(extract_dir / "manifest.json"),
          "extract writes artifacts and manifest");

    // --- strict replay on an empty cache -------------------------------------

    const CliResult missing_fixture =
        run_cli({"pipeline", reports_path.string(), "--ontology", ontology_path.string(),
                 "--backend", "replay", "--cache-dir", empty_cache.string(), "--out",
                 (work.path() / "out-missing").string(), "--k", "0", "--k-typing", "0",
                 "--k-relation", "0"});
    check(missing_fixture.code == 1 &&
              contains(missing_fixture.output, "fixture for request hash"),
          "strict replay on an empty cache exits 1 naming the missing hash",
          missing_fixture.output);

    // --- eval ----------------------------------------------------------------

    const CliResult eval_run =
        run_cli({"eval", "--pred", run_dir.string(), "--gold", gold_path.string()});
    check(eval_run.code == 0, "eval exits 0", eval_run.output);
    json eval_json;
    bool eval_parsed = false;
    try {
        eval_json = json::parse(eval_run.output);
        eval_parsed = true;
    } catch (const json::exception&) {
    }
    check(eval_parsed, "eval prints a JSON score report", eval_run.output);
    if (eval_parsed) {
        check(eval_json.at("aggregate").at("triplets").at("f1").get<double>() == 1.0,
              "extracted triplets score F1 1.0 against matching gold");
        check(eval_json.at("aggregate").at("end_to_end").at("f1").get<double>() == 1.0,
              "end-to-end graph scores F1 1.0 against matching gold");
        check(eval_json.at("aggregate").at("inferred").at("f1").get<double>() == 1.0,
              "inferred relations score F1 1.0 against matching gold");
    }

    const CliResult eval_out_path =
        run_cli({"eval", "--pred", run_dir.string(), "--gold", gold_path.string(), "--out",
                 (work.path() / "scores.json").string()});
    check(eval_out_path.code == 0 && fs::exists(work.path() / "scores.json"),
          "eval --out writes the score file", eval_out_path.output);

    const CliResult eval_bad_pred =
        run_cli({"eval", "--pred", (work.path() / "nope").string(), "--gold",
                 gold_path.string()});
    check(eval_bad_pred.code == 2 && contains(eval_bad_pred.output, "not a directory"),
          "eval with a bad prediction path exits 2", eval_bad_pred.output);

    const CliResult eval_judge_no_cache =
        run_cli({"eval", "--pred", run_dir.string(), "--gold", gold_path.string(),
                 "--match-mode", "judge"});
    check(eval_judge_no_cache.code == 2 &&
              contains(eval_judge_no_cache.output, "cache directory"),
          "judge mode without a fixture cache exits 2", eval_judge_no_cache.output);

    if (g_failures == 0) {
        std::cout << "all cli driver checks passed\n";
        return 0;
    }
    std::cout << g_failures << " cli driver checks failed\n";
    return 1;
}
