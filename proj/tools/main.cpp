// Command-line front end: each subcommand drives one pipeline stage through
// the shared artifact cache, so a later stage reuses everything an earlier
// invocation already produced.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "topicrec/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string corpus, ne, dt, log, stopwords, output;
    long long seed = -1;
    int workers = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "JSON configuration file");
    cmd->add_option("--corpus", args.corpus, "corpus JSONL path (overrides config)");
    cmd->add_option("--named-entities", args.ne, "named-entity annotation TSV");
    cmd->add_option("--domain-terms", args.dt, "domain-term annotation TSV");
    cmd->add_option("--log", args.log, "access log TSV");
    cmd->add_option("--stopwords", args.stopwords, "stopword list, one per line");
    cmd->add_option("-o,--output", args.output, "output directory");
    cmd->add_option("--seed", args.seed, "master random seed");
    cmd->add_option("--workers", args.workers, "evaluation worker threads (0 = auto)");
}

topicrec::RunConfig resolve(const CommonArgs& args) {
    topicrec::RunConfig cfg = args.config_path.empty()
                                  ? topicrec::default_run_config()
                                  : topicrec::load_config(args.config_path);
    if (!args.corpus.empty()) cfg.corpus_path = args.corpus;
    if (!args.ne.empty()) cfg.ne_path = args.ne;
    if (!args.dt.empty()) cfg.dt_path = args.dt;
    if (!args.log.empty()) cfg.log_path = args.log;
    if (!args.stopwords.empty()) cfg.stopwords_path = args.stopwords;
    if (!args.output.empty()) cfg.output_dir = args.output;
    if (args.seed >= 0) cfg.seed = static_cast<uint64_t>(args.seed);
    if (args.workers >= 0) cfg.workers = args.workers;
    return cfg;
}

void print_stats(const topicrec::PipelineStats& stats) {
    for (const auto& [stage, n] : stats.computed) {
        std::cout << "computed " << stage << ": " << n << "\n";
    }
    for (const auto& [stage, n] : stats.cache_hits) {
        std::cout << "cache hit " << stage << ": " << n << "\n";
    }
    std::cout << "total computed: " << stats.total_computed()
              << ", total cache hits: " << stats.total_cache_hits() << "\n";
}

void print_report(const topicrec::RunConfig& cfg) {
    std::cout << "report:  " << topicrec::report_csv_path(cfg) << "\n"
              << "summary: " << topicrec::summary_csv_path(cfg) << "\n"
              << "text:    " << topicrec::report_txt_path(cfg) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"topic-as-context recommendation pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string chosen;
    for (const char* name : {"ingest", "cluster", "topics", "train", "evaluate",
                             "report", "run-all"}) {
        CLI::App* cmd = app.add_subcommand(name, "");
        add_common(cmd, args);
        cmd->callback([&chosen, name]() { chosen = name; });
    }
    app.get_subcommand("ingest")->description(
        "load the corpus and build the three view matrices");
    app.get_subcommand("cluster")->description(
        "run the per-view ensembles and the consensus combinations");
    app.get_subcommand("topics")->description(
        "build hierarchies and topic models for every weight x granularity");
    app.get_subcommand("train")->description(
        "export per-fold recommender models under <output>/models");
    app.get_subcommand("evaluate")->description(
        "run the cross-validated comparison of every strategy");
    app.get_subcommand("report")->description(
        "evaluate and write report.csv, summary.csv and report.txt");
    app.get_subcommand("run-all")->description(
        "full pipeline: ingest through report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        topicrec::RunConfig cfg = resolve(args);
        if (chosen == "ingest") {
            print_stats(topicrec::run_ingest(cfg));
        } else if (chosen == "cluster") {
            print_stats(topicrec::run_cluster(cfg));
        } else if (chosen == "topics") {
            print_stats(topicrec::run_topics(cfg));
        } else if (chosen == "train") {
            print_stats(topicrec::run_train(cfg));
        } else if (chosen == "evaluate") {
            print_stats(topicrec::run_evaluate(cfg).stats);
        } else if (chosen == "report" || chosen == "run-all") {
            topicrec::PipelineResult result = chosen == "report"
                                                  ? topicrec::run_report(cfg)
                                                  : topicrec::run_all(cfg);
            print_stats(result.stats);
            print_report(cfg);
        }
        return 0;
    } catch (const std::exception& e) {
        nlohmann::json err;
        err["error"] = e.what();
        std::cerr << err.dump() << "\n";
        return 1;
    }
}
