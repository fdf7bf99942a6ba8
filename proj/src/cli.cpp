#include "plurihop/cli.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "plurihop/evalkit.hpp"
#include "plurihop/log.hpp"
#include "plurihop/text.hpp"
#include "plurihop/traingen.hpp"

namespace plurihop {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string utc_now() {
    auto now = std::chrono::system_clock::now();
    auto t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

void require_exists(const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) throw UsageError(what + " not found: " + p.string());
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << content;
}

std::vector<std::size_t> parse_ks(const std::string& spec) {
    std::vector<std::size_t> ks;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto t = std::string(text::trim(item));
        if (t.empty()) continue;
        try {
            std::size_t used = 0;
            auto v = std::stoll(t, &used);
            if (used != t.size() || v < 1) throw std::invalid_argument(t);
            ks.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw UsageError("invalid k value '" + t + "'");
        }
    }
    if (ks.empty()) throw UsageError("no k values given");
    return ks;
}

struct Options {
    std::string config_path;
    std::optional<std::string> provider;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> max_concurrency;
    std::optional<std::string> index_dir;
    std::string output = "json";
    std::string manifest_path;

    std::string corpus;
    std::string question;
    std::string mode = "plurihop";
    std::optional<double> tau;
    std::optional<std::size_t> K;
    std::optional<std::size_t> k;
    bool no_metadata_filter = false;
    bool no_relevance_filter = false;
    std::optional<std::string> decomposer;
    std::optional<std::string> finetuned_model;
    std::string cache_path;
    std::string dataset;
    std::string outputs;
    std::string report_dir = "eval-report";
    std::string ks = "1,2,5,10,20,50";
    std::size_t sample_n = 100;
    std::string out_dir = "roc-output";
    std::string tuples;
    std::size_t target_n = 100;
    std::string train_out = "training.jsonl";
    std::size_t context_budget = 24000;
};

class Runner {
public:
    Runner(Options o, std::ostream& out, std::ostream& err, const EnvLookup& env)
        : o_(std::move(o)), out_(out), err_(err) {
        cfg_ = o_.config_path.empty() ? AppConfig{} : load_config_file(o_.config_path);
        apply_env(cfg_, env);
        if (o_.provider) cfg_.provider = *o_.provider;
        if (o_.seed) cfg_.seed = *o_.seed;
        if (o_.max_concurrency) cfg_.max_concurrency = *o_.max_concurrency;
        if (o_.index_dir) cfg_.index_dir = *o_.index_dir;
        if (o_.tau) cfg_.pipeline.tau = *o_.tau;
        if (o_.K) cfg_.pipeline.K = *o_.K;
        if (o_.k) cfg_.pipeline.k = cfg_.naive.k = *o_.k;
        if (o_.no_metadata_filter) cfg_.pipeline.use_metadata_filter = cfg_.naive.use_metadata_filter = false;
        if (o_.no_relevance_filter) cfg_.pipeline.use_relevance_filter = false;
        if (o_.decomposer) {
            cfg_.pipeline.decomposer.mode =
                *o_.decomposer == "finetuned" ? DecomposerMode::finetuned : DecomposerMode::few_shot;
        }
        if (o_.finetuned_model) cfg_.pipeline.decomposer.finetuned_model = *o_.finetuned_model;
        if (cfg_.pipeline.decomposer.mode == DecomposerMode::finetuned &&
            cfg_.pipeline.decomposer.finetuned_model.empty()) {
            throw ConfigError("the finetuned decomposer needs a model name (--finetuned-model)");
        }
        cfg_.pipeline.max_concurrency = cfg_.max_concurrency;
        cfg_.build.max_concurrency = cfg_.max_concurrency;
        try {
            cfg_.pipeline.validate();
            cfg_.chunking.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }

    int run(const std::string& command) {
        command_ = command;
        started_ = utc_now();
        int code = kExitOk;
        try {
            if (command == "ingest") code = ingest();
            else if (command == "ask") code = ask();
            else if (command == "eval") code = evaluate();
            else if (command == "repetitiveness") code = repetitiveness();
            else if (command == "roc") code = roc();
            else if (command == "gen-train-data") code = gentrain();
        } catch (...) {
            write_manifest(kExitFailure);
            throw;
        }
        write_manifest(code);
        return code;
    }

private:
    ProviderSet& providers() {
        if (!providers_) providers_ = make_providers(cfg_);
        return *providers_;
    }

    CorpusIndex load_index() {
        auto manifest = cfg_.index_dir / "manifest.json";
        require_exists(manifest, "index (run 'ingest' first)");
        index_fingerprint_ = text::sha256_hex(read_file(manifest));
        return CorpusIndex::load(cfg_.index_dir);
    }

    void emit(const ordered_json& j, const std::string& pretty) {
        if (o_.output == "pretty") {
            out_ << pretty;
            if (!pretty.empty() && pretty.back() != '\n') out_ << '\n';
        } else {
            out_ << j.dump(2) << '\n';
        }
    }

    void write_manifest(int code) {
        if (!providers_) return;
        ordered_json m;
        m["command"] = command_;
        m["started_at"] = started_;
        m["finished_at"] = utc_now();
        m["exit_code"] = code;
        m["config"] = cfg_.to_json();
        m["providers"] = {{"chat", providers_->chat->tag()},
                          {"judge", providers_->judge->tag()},
                          {"embedder", providers_->embedder->model_tag()},
                          {"reranker", providers_->reranker->tag()}};
        m["index"] = {{"dir", cfg_.index_dir.string()}, {"fingerprint", index_fingerprint_}};
        m["token_ledger"] = ledger_.to_json();
        fs::path path = o_.manifest_path.empty() ? cfg_.index_dir / "runs" / (command_ + "-manifest.json")
                                                 : fs::path(o_.manifest_path);
        try {
            write_file(path, m.dump(2) + "\n");
        } catch (const std::exception& e) {
            err_ << "warning: " << e.what() << '\n';
        }
    }

    int ingest() {
        require_exists(o_.corpus, "corpus directory");
        auto corpus = load_corpus(o_.corpus);
        for (const auto& e : corpus.errors) err_ << "warning: skipped " << e.path.string() << ": " << e.message << '\n';

        std::vector<DocumentSummary> previous;
        if (fs::exists(cfg_.index_dir / "manifest.json")) {
            try {
                previous = CorpusIndex::load(cfg_.index_dir).summaries.summaries;
            } catch (const std::exception& e) {
                err_ << "warning: existing index unreadable, rebuilding: " << e.what() << '\n';
            }
        }
        fs::path cache_path = o_.cache_path.empty() ? cfg_.index_dir / "embedding_cache.jsonl" : fs::path(o_.cache_path);
        auto cache = EmbeddingCache::load(cache_path);

        auto& p = providers();
        auto index = build_corpus_index(corpus, cfg_.chunking, *p.chat, *p.embedder, &cache, &ledger_, cfg_.build,
                                        previous);
        index.save(cfg_.index_dir);
        cache.save(cache_path);
        index_fingerprint_ = text::sha256_hex(read_file(cfg_.index_dir / "manifest.json"));

        ordered_json j{{"index_dir", cfg_.index_dir.string()},
                       {"documents", index.documents.size()},
                       {"chunks", index.chunks.chunks.size()},
                       {"summaries", index.summaries.summaries.size()},
                       {"load_errors", corpus.errors.size()},
                       {"token_ledger", ledger_.to_json()}};
        emit(j, fmt::format("Indexed {} documents ({} chunks) into {}\n", index.documents.size(),
                            index.chunks.chunks.size(), cfg_.index_dir.string()));
        return kExitOk;
    }

    FinalAnswer answer(const std::string& question, const CorpusIndex& index, const std::string& mode) {
        auto& p = providers();
        if (mode == "plurihop") return run_plurihop(question, index, cfg_.pipeline, p, &ledger_);
        auto naive = cfg_.naive;
        naive.rerank = mode == "naive+rerank";
        return run_naive_rag(question, index, naive, p, &ledger_);
    }

    static std::string pretty_answer(const FinalAnswer& a) {
        std::string s = a.answer_text + "\n";
        if (!a.relevant_documents.empty()) {
            s += "\nSources:\n";
            for (std::size_t i = 0; i < a.relevant_documents.size(); ++i) {
                s += fmt::format("  [{}] {}\n", i + 1, a.relevant_documents[i]);
            }
        }
        return s;
    }

    int ask() {
        auto index = load_index();
        try {
            auto a = answer(o_.question, index, o_.mode);
            emit(a.to_json(), pretty_answer(a));
        } catch (const PipelineError& e) {
            err_ << "error: " << e.what() << '\n';
            out_ << e.partial().to_json().dump(2) << '\n';
            return kExitFailure;
        }
        return kExitOk;
    }

    int evaluate() {
        require_exists(o_.dataset, "dataset");
        std::vector<QARecord> dataset;
        try {
            dataset = load_dataset(o_.dataset);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        if (dataset.empty()) throw UsageError("dataset is empty: " + o_.dataset);

        std::vector<std::optional<SystemOutput>> outputs(dataset.size());
        if (!o_.outputs.empty()) {
            require_exists(o_.outputs, "outputs file");
            std::istringstream in(read_file(o_.outputs));
            std::string line;
            std::size_t i = 0;
            while (std::getline(in, line) && i < outputs.size()) {
                if (text::trim(line).empty()) continue;
                auto j = json::parse(line, nullptr, false);
                if (j.is_object() && j.contains("answer")) {
                    SystemOutput o{j["answer"].get<std::string>(), std::nullopt};
                    if (j.contains("relevant_documents") && j["relevant_documents"].is_array()) {
                        o.relevant_documents = j["relevant_documents"].get<std::vector<std::string>>();
                    }
                    outputs[i] = std::move(o);
                }
                ++i;
            }
        } else {
            auto index = load_index();
            std::string lines;
            for (std::size_t i = 0; i < dataset.size(); ++i) {
                try {
                    auto a = answer(dataset[i].question, index, o_.mode);
                    outputs[i] = SystemOutput{a.answer_text, a.relevant_documents};
                    lines += json{{"question", a.question}, {"answer", a.answer_text},
                                  {"relevant_documents", a.relevant_documents}}
                                 .dump() + "\n";
                } catch (const PipelineError& e) {
                    err_ << "warning: question " << i + 1 << " failed: " << e.what() << '\n';
                    lines += json{{"question", dataset[i].question}, {"error", e.what()}}.dump() + "\n";
                }
            }
            write_file(fs::path(o_.report_dir) / "outputs.jsonl", lines);
        }

        auto report = evaluate_run(dataset, outputs, *providers().judge, &ledger_, cfg_.max_concurrency);
        write_file(fs::path(o_.report_dir) / "report.json", report.to_json().dump(2) + "\n");
        write_file(fs::path(o_.report_dir) / "report.md", report.to_markdown());
        emit(report.to_json()["summary"], report.to_markdown());
        return kExitOk;
    }

    int repetitiveness() {
        require_exists(o_.corpus, "corpus directory");
        auto ks = parse_ks(o_.ks);
        auto corpus = load_corpus(o_.corpus);
        EmbeddingCache cache;
        fs::path cache_path = o_.cache_path;
        if (!cache_path.empty()) cache = EmbeddingCache::load(cache_path);
        RepetitivenessResult r;
        try {
            r = repetitiveness_at_k(corpus, ks, o_.sample_n, cfg_.chunking, *providers().embedder, cfg_.seed,
                                    &ledger_, &cache);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        if (!cache_path.empty()) cache.save(cache_path);
        ordered_json rk = ordered_json::object();
        std::string pretty;
        for (const auto& [k, v] : r.r_at_k) {
            rk[std::to_string(k)] = v;
            pretty += fmt::format("r@{:<3} {:.6f}\n", k, v);
        }
        ordered_json j{{"r_at_k", rk},
                       {"documents_sampled", r.documents_sampled},
                       {"chunk_count", r.chunk_count},
                       {"seed", cfg_.seed},
                       {"embedding_model", providers().embedder->model_tag()}};
        emit(j, pretty);
        return kExitOk;
    }

    int roc() {
        require_exists(o_.dataset, "dataset");
        std::vector<QARecord> dataset;
        try {
            dataset = load_dataset(o_.dataset);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        auto index = load_index();
        RocAnalysis a;
        try {
            a = filter_roc(dataset, index, cfg_.pipeline, providers(), &ledger_);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        fs::path dir = o_.out_dir;
        write_file(dir / "roc_points.csv", a.points_csv());
        write_file(dir / "score_histogram.csv", a.histogram_csv());
        write_file(dir / "roc_summary.json", a.summary_json().dump(2) + "\n");
        emit(a.summary_json(), fmt::format("AUC {:.4f} over {} pairs; bottom decile holds {:.1f}% of irrelevant and "
                                           "{:.1f}% of relevant documents\n",
                                           a.auc, a.pairs.size(), 100.0 * a.irrelevant_in_bottom_decile,
                                           100.0 * a.relevant_in_bottom_decile));
        return kExitOk;
    }

    int gentrain() {
        require_exists(o_.tuples, "tuples file");
        require_exists(o_.corpus, "corpus directory");
        std::vector<TrainingTuple> tuples;
        try {
            tuples = load_training_tuples(o_.tuples);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        if (tuples.empty()) throw UsageError("tuples file is empty: " + o_.tuples);
        auto corpus = load_corpus(o_.corpus);
        TrainGenConfig tg{o_.context_budget, cfg_.max_concurrency};
        auto file = build_training_file(tuples, o_.target_n, corpus, *providers().chat, tg, &ledger_);
        auto content = file.to_jsonl();
        write_file(o_.train_out, content);
        for (const auto& d : file.diagnostics) err_ << "warning: " << d << '\n';
        ordered_json j{{"output", o_.train_out},
                       {"examples", file.examples.size()},
                       {"target", o_.target_n},
                       {"discarded", file.diagnostics.size()},
                       {"sha256", text::sha256_hex(content)}};
        emit(j, fmt::format("Wrote {} examples to {}\n", file.examples.size(), o_.train_out));
        return kExitOk;
    }

    Options o_;
    std::ostream& out_;
    std::ostream& err_;
    AppConfig cfg_;
    Ledger ledger_;
    std::optional<ProviderSet> providers_;
    std::string command_;
    std::string started_;
    std::string index_fingerprint_;
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
    Options o;
    CLI::App app{"Exhaustive question answering over document corpora", "plurihop"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    app.add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--provider", o.provider, "Model providers")->check(CLI::IsMember({"mock", "http"}));
    app.add_option("--seed", o.seed, "Random seed (default 42)");
    app.add_option("--max-concurrency", o.max_concurrency, "Cap on in-flight provider calls")
        ->check(CLI::PositiveNumber);
    app.add_option("--output", o.output, "Output format")->check(CLI::IsMember({"json", "pretty"}));
    app.add_option("--index-dir", o.index_dir, "Index directory");
    app.add_option("--manifest", o.manifest_path, "Run manifest path (default <index-dir>/runs/<command>-manifest.json)");

    auto* ingest = app.add_subcommand("ingest", "Chunk, summarize and embed a corpus");
    ingest->add_option("corpus", o.corpus, "Corpus directory")->required();
    ingest->add_option("--cache", o.cache_path, "Embedding cache file");

    auto add_mode = [&](CLI::App* sub) {
        sub->add_option("--mode", o.mode, "Answering system")
            ->check(CLI::IsMember({"plurihop", "naive", "naive+rerank"}));
        sub->add_option("--tau", o.tau, "Relevance threshold")->check(CLI::Range(0.0, 1.0));
        sub->add_option("--K", o.K, "Candidate document cap (default: all)")->check(CLI::PositiveNumber);
        sub->add_option("--k", o.k, "Chunks per question")->check(CLI::PositiveNumber);
        sub->add_flag("--no-metadata-filter", o.no_metadata_filter, "Disable metadata filtering");
        sub->add_flag("--no-relevance-filter", o.no_relevance_filter, "Disable the relevance filter");
        sub->add_option("--decomposer", o.decomposer, "Query decomposer")
            ->check(CLI::IsMember({"few_shot", "finetuned"}));
        sub->add_option("--finetuned-model", o.finetuned_model, "Model name of the fine-tuned decomposer");
    };

    auto* ask = app.add_subcommand("ask", "Answer one question");
    ask->add_option("question", o.question, "Question")->required();
    add_mode(ask);

    auto* eval = app.add_subcommand("eval", "Score a system on a QA dataset");
    eval->add_option("dataset", o.dataset, "JSON-lines dataset")->required();
    eval->add_option("--outputs", o.outputs, "Precomputed answers (JSON lines, one per dataset record)");
    eval->add_option("--report-dir", o.report_dir, "Report directory");
    add_mode(eval);

    auto* rep = app.add_subcommand("repetitiveness", "Corpus repetitiveness r@k");
    rep->add_option("corpus", o.corpus, "Corpus directory")->required();
    rep->add_option("--ks", o.ks, "Comma-separated k values");
    rep->add_option("--n", o.sample_n, "Documents to sample")->check(CLI::PositiveNumber);
    rep->add_option("--cache", o.cache_path, "Embedding cache file");

    auto* roc = app.add_subcommand("roc", "Relevance-filter ROC analysis");
    roc->add_option("dataset", o.dataset, "JSON-lines dataset with gold_documents")->required();
    roc->add_option("--out-dir", o.out_dir, "Directory for CSV and summary outputs");
    roc->add_option("--tau", o.tau, "Ignored; the ROC sweeps all thresholds")->check(CLI::Range(0.0, 1.0));
    roc->add_option("--k", o.k, "Chunks per question")->check(CLI::PositiveNumber);

    auto* gen = app.add_subcommand("gen-train-data", "Build a decomposer fine-tuning file");
    gen->add_option("tuples", o.tuples, "JSON lines of {question, doc_id}")->required();
    gen->add_option("--corpus", o.corpus, "Corpus directory")->required();
    gen->add_option("--n", o.target_n, "Number of examples")->check(CLI::PositiveNumber);
    gen->add_option("--out", o.train_out, "Output file");
    gen->add_option("--context-budget", o.context_budget, "Characters of document text per example")
        ->check(CLI::PositiveNumber);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        Runner runner(std::move(o), out, err, env);
        return runner.run(app.get_subcommands().front()->get_name());
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace plurihop
