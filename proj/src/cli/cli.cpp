#include "lingua/cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "lingua/bpe/bpe.hpp"
#include "lingua/data/dataset.hpp"
#include "lingua/train/trainer.hpp"
#include "lingua/util/config_file.hpp"

namespace fs = std::filesystem;

namespace lingua::cli {

namespace {

// Bad flags, missing files named on the command line, inconsistent configs.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt(double v, int digits = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw UsageError(what + " not found: " + p.string());
}

// Run directories are never silently reused.
void prepare_run_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw UsageError(dir.string() + " exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw UsageError("output directory " + dir.string() + " is not empty (use --force to overwrite)");
    for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path());
  }
  fs::create_directories(dir);
}

std::vector<std::string> read_tsv_transcripts(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open corpus " + path.string());
  std::vector<std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected id<TAB>lang<TAB>transcript");
    }
    out.push_back(line.substr(b + 1));
  }
  return out;
}

train::TrainOptions train_options(const util::ConfigFile& cfg, const model::ModelConfig& m) {
  train::TrainOptions o;
  o.steps = static_cast<std::size_t>(cfg.get_int_or("train.steps", 3000));
  o.schedule.d_model = cfg.get_double_or("train.schedule_d", static_cast<double>(m.d_model));
  o.schedule.warmup = cfg.get_double_or("train.warmup", 400);
  o.schedule.factor = cfg.get_double_or("train.factor", 1.0);
  o.clip = cfg.get_double_or("train.clip", 5.0);
  o.max_frames = static_cast<std::size_t>(cfg.get_int_or("train.max_frames", 2000));
  o.eval_every = static_cast<std::size_t>(cfg.get_int_or("train.eval_every", 500));
  o.checkpoint_every = static_cast<std::size_t>(cfg.get_int_or("train.checkpoint_every", 500));
  o.eval_threads = eval_threads();
  if (o.steps < 1 || o.max_frames < 1) throw util::ConfigError("train.steps and train.max_frames must be positive");
  if (!(o.schedule.warmup > 0 && o.schedule.factor > 0)) throw util::ConfigError("train.warmup and train.factor must be positive");
  return o;
}

// Copies the [train] keys with their resolved values into the snapshot.
void write_train_section(util::ConfigFile& snap, const train::TrainOptions& o) {
  snap.set("train.steps", std::to_string(o.steps));
  snap.set("train.schedule_d", util::format_double(o.schedule.d_model));
  snap.set("train.warmup", util::format_double(o.schedule.warmup));
  snap.set("train.factor", util::format_double(o.schedule.factor));
  snap.set("train.clip", util::format_double(o.clip));
  snap.set("train.max_frames", std::to_string(o.max_frames));
  snap.set("train.eval_every", std::to_string(o.eval_every));
  snap.set("train.checkpoint_every", std::to_string(o.checkpoint_every));
}

struct RunData {
  std::vector<data::Utterance> train, dev;
  bpe::Vocabulary vocab;
};

RunData load_run_data(const util::ConfigFile& cfg, bool need_vocab) {
  RunData d;
  const fs::path train_stem = cfg.get("data.train");
  require_file(fs::path(train_stem.string() + ".tsv"), "training data");
  d.train = data::read_dataset(train_stem);
  if (cfg.has("data.dev")) {
    require_file(fs::path(cfg.get("data.dev") + ".tsv"), "dev data");
    d.dev = data::read_dataset(cfg.get("data.dev"));
  }
  if (need_vocab) {
    const fs::path vocab = cfg.get("data.vocab");
    require_file(vocab, "vocabulary");
    d.vocab = bpe::Vocabulary::load(vocab);
  }
  return d;
}

void progress(std::ostream& out, const std::string& line) {
  const auto step = std::stoul(line.substr(0, line.find('\t')));
  if (step % 100 == 0) out << "step " << line << '\n' << std::flush;
}

int cmd_build_vocab(const std::vector<std::string>& corpora, std::size_t size, const fs::path& out_path,
                    std::ostream& out) {
  std::vector<std::string> texts;
  for (const auto& c : corpora) {
    require_file(c, "corpus");
    auto t = read_tsv_transcripts(c);
    texts.insert(texts.end(), t.begin(), t.end());
  }
  if (size < 256) throw UsageError("--size must be at least 256");
  const auto vocab = bpe::train_bpe(texts, size);
  vocab.save(out_path);
  out << "wrote " << out_path.string() << ": " << vocab.size() << " tokens (" << vocab.merges().size() << " merges)\n";
  return kOk;
}

int cmd_gen_data(const fs::path& spec_path, std::uint64_t seed, const fs::path& dir, bool force, std::ostream& out) {
  require_file(spec_path, "spec file");
  const auto cfg = util::ConfigFile::load(spec_path);
  const auto corpus = data::corpus_spec_from_config(cfg);
  prepare_run_dir(dir, force);
  const std::vector<std::pair<std::string, const std::vector<std::size_t>*>> splits{
      {"train", &corpus.train_counts}, {"dev", &corpus.dev_counts}, {"test", &corpus.test_counts}};
  for (std::size_t i = 0; i < splits.size(); ++i) {
    const auto utts = data::generate_corpus(corpus, *splits[i].second, seed * 4 + i, splits[i].first);
    data::write_dataset(dir / splits[i].first, utts);
    std::size_t frames = 0;
    for (const auto& u : utts) frames += u.num_frames;
    out << splits[i].first << ": " << utts.size() << " utterances, " << frames << " frames\n";
  }
  fs::copy_file(spec_path, dir / "spec.cfg", fs::copy_options::overwrite_existing);
  return kOk;
}

int cmd_train(const fs::path& config_path, const std::string& mode_override, long seed_override,
              const std::string& out_override, long steps_override, bool force, std::ostream& out) {
  require_file(config_path, "config file");
  auto cfg = util::ConfigFile::load(config_path);
  if (!mode_override.empty()) cfg.set("model.mode", mode_override);
  if (seed_override >= 0) cfg.set("run.seed", std::to_string(seed_override));
  if (!out_override.empty()) cfg.set("run.out", out_override);
  if (steps_override > 0) cfg.set("train.steps", std::to_string(steps_override));

  auto d = load_run_data(cfg, true);
  if (!cfg.has("model.vocab_size")) cfg.set("model.vocab_size", std::to_string(d.vocab.size()));
  if (!cfg.has("model.feat_dim")) cfg.set("model.feat_dim", std::to_string(d.train.front().feat_dim));
  if (!cfg.has("model.num_langs")) cfg.set("model.num_langs", std::to_string(data::count_langs(d.train)));
  const auto mcfg = model::ModelConfig::read(cfg);
  if (mcfg.vocab_size != d.vocab.size()) {
    throw util::ConfigError("model.vocab_size " + std::to_string(mcfg.vocab_size) + " does not match vocabulary of " +
                            std::to_string(d.vocab.size()));
  }
  if (mcfg.is_peft()) throw util::ConfigError("mode " + model::mode_name(mcfg.mode) + " is trained with `finetune`");
  const auto options = train_options(cfg, mcfg);
  const auto seed = static_cast<std::uint64_t>(cfg.get_int_or("run.seed", 1));
  const fs::path run_dir = cfg.get("run.out");
  prepare_run_dir(run_dir, force);

  util::ConfigFile snap;
  snap.set("run.out", run_dir.string());
  snap.set("run.seed", std::to_string(seed));
  for (const char* k : {"data.train", "data.dev", "data.vocab"}) {
    if (cfg.has(k)) snap.set(k, cfg.get(k));
  }
  mcfg.write(snap);
  write_train_section(snap, options);
  snap.save(run_dir / "config.cfg");

  auto state = train::make_state(mcfg, seed);
  out << "training " << model::mode_name(mcfg.mode) << ": " << state.total_count() << " parameters, "
      << d.train.size() << " utterances\n";
  auto opts = options;
  opts.on_step = [&out](const std::string& line) { progress(out, line); };
  train::run_training(state, opts, d.train, d.dev, d.vocab, run_dir);
  out << "done: " << (run_dir / "final").string() << '\n';
  return kOk;
}

fs::path resolve_checkpoint(const fs::path& p) {
  if (fs::exists(p / "config.cfg") && fs::exists(p / "params.lct")) return p;
  if (fs::exists(p / "final" / "params.lct")) return p / "final";
  throw UsageError("no checkpoint at " + p.string());
}

int cmd_finetune(const fs::path& base_path, const fs::path& config_path, long seed_override,
                 const std::string& out_override, long steps_override, bool force, std::ostream& out) {
  require_file(config_path, "config file");
  require_file(base_path, "base checkpoint");
  auto cfg = util::ConfigFile::load(config_path);
  if (seed_override >= 0) cfg.set("run.seed", std::to_string(seed_override));
  if (!out_override.empty()) cfg.set("run.out", out_override);
  if (steps_override > 0) cfg.set("train.steps", std::to_string(steps_override));

  bpe::Vocabulary vocab;
  const auto base = train::load_checkpoint(resolve_checkpoint(base_path), &vocab);
  const auto tuner = model::parse_mode(cfg.get_or("peft.mode", "peft-prefix"));
  const auto num_prompt = static_cast<std::size_t>(cfg.get_int_or("peft.num_prompt", 5));
  const auto adapter_dim = static_cast<std::size_t>(cfg.get_int_or("peft.adapter_dim", 0));
  const auto seed = static_cast<std::uint64_t>(cfg.get_int_or("run.seed", 1));
  // Throws a config error naming the base mode when it is not an fl-adapter model.
  auto state = train::make_peft_state(base, tuner, num_prompt, adapter_dim, seed);
  if (cfg.has("peft.prompt_position")) {
    util::ConfigFile tmp;
    state.config.write(tmp);
    tmp.set("model.prompt_position", cfg.get("peft.prompt_position"));
    state.config = model::ModelConfig::read(tmp);
  }
  auto d = load_run_data(cfg, false);
  d.vocab = vocab;
  const auto options = train_options(cfg, state.config);
  const fs::path run_dir = cfg.get("run.out");
  prepare_run_dir(run_dir, force);

  util::ConfigFile snap;
  snap.set("run.out", run_dir.string());
  snap.set("run.seed", std::to_string(seed));
  snap.set("run.base", base_path.string());
  for (const char* k : {"data.train", "data.dev"}) {
    if (cfg.has(k)) snap.set(k, cfg.get(k));
  }
  state.config.write(snap);
  write_train_section(snap, options);
  snap.save(run_dir / "config.cfg");

  out << "fine-tuning " << model::mode_name(state.config.mode) << ": " << state.trainable_count() << " of "
      << state.total_count() << " parameters trainable\n";
  auto opts = options;
  opts.on_step = [&out](const std::string& line) { progress(out, line); };
  train::run_training(state, opts, d.train, d.dev, d.vocab, run_dir);
  out << "done: " << (run_dir / "final").string() << '\n';
  return kOk;
}

std::string report_table(const std::map<int, obj::EditCounts>& per_lang, double avg) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "lang" << std::right << std::setw(9) << "wer" << std::setw(7) << "subs"
     << std::setw(7) << "dels" << std::setw(7) << "ins" << std::setw(8) << "words" << '\n';
  obj::EditCounts sum;
  for (const auto& [lang, c] : per_lang) {
    os << std::left << std::setw(8) << lang << std::right << std::setw(9) << fmt(c.wer()) << std::setw(7)
       << c.substitutions << std::setw(7) << c.deletions << std::setw(7) << c.insertions << std::setw(8) << c.ref_words
       << '\n';
    sum += c;
  }
  os << std::left << std::setw(8) << "avg" << std::right << std::setw(9) << fmt(avg) << std::setw(7)
     << sum.substitutions << std::setw(7) << sum.deletions << std::setw(7) << sum.insertions << std::setw(8)
     << sum.ref_words << '\n';
  return os.str();
}

int cmd_eval(const fs::path& ckpt_path, const fs::path& data_stem, const std::string& lang_arg,
             const fs::path& report_path, const fs::path& hyp_path, std::ostream& out) {
  bpe::Vocabulary vocab;
  const auto state = train::load_checkpoint(resolve_checkpoint(ckpt_path), &vocab);
  const auto& cfg = state.config;
  int lang = -1;
  if (cfg.needs_lang()) {
    if (lang_arg.empty()) {
      throw UsageError("mode requires language id: " + model::mode_name(cfg.mode) +
                       " checkpoints need --lang <id> or --lang all");
    }
    if (lang_arg == "all") {
      lang = train::kOwnLanguage;
    } else {
      std::size_t used = 0;
      try {
        lang = std::stoi(lang_arg, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != lang_arg.size() || lang < 0 || static_cast<std::size_t>(lang) >= cfg.num_langs) {
        throw UsageError("--lang must be 'all' or an id below " + std::to_string(cfg.num_langs) + ", got '" +
                         lang_arg + "'");
      }
    }
  } else if (!lang_arg.empty()) {
    throw UsageError("mode " + model::mode_name(cfg.mode) + " is language-agnostic and takes no --lang");
  }
  require_file(fs::path(data_stem.string() + ".tsv"), "evaluation data");
  const auto utts = data::read_dataset(data_stem);
  if (utts.empty()) throw UsageError("evaluation set " + data_stem.string() + " is empty");
  const model::Model m(cfg, state.params);
  const auto r = train::evaluate(m, utts, vocab, lang, eval_threads());

  const double avg = r.macro_wer();
  std::ofstream csv(report_path, std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write " + report_path.string());
  csv << "lang,wer,subs,dels,ins,num_ref_words\n";
  obj::EditCounts sum;
  for (const auto& [l, c] : r.per_lang) {
    csv << l << ',' << fmt(c.wer(), 4) << ',' << c.substitutions << ',' << c.deletions << ',' << c.insertions << ','
        << c.ref_words << '\n';
    sum += c;
  }
  csv << "avg," << fmt(avg, 4) << ',' << sum.substitutions << ',' << sum.deletions << ',' << sum.insertions << ','
      << sum.ref_words << '\n';
  if (!hyp_path.empty()) {
    std::ofstream hyp(hyp_path, std::ios::trunc);
    for (std::size_t i = 0; i < utts.size(); ++i) hyp << utts[i].id << '\t' << r.hypotheses[i] << '\n';
  }
  out << report_table(r.per_lang, avg);
  return kOk;
}

struct RunSummary {
  std::string name, mode;
  std::size_t total = 0, trainable = 0;
  std::map<int, double> wer;
  double avg = 0;
};

RunSummary summarize_run(const fs::path& dir) {
  const auto ckpt = resolve_checkpoint(dir);
  const auto cfg = util::ConfigFile::load(ckpt / "config.cfg");
  RunSummary s;
  s.name = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
  s.mode = cfg.get("model.mode");
  s.total = static_cast<std::size_t>(cfg.get_int("state.total_params"));
  s.trainable = static_cast<std::size_t>(cfg.get_int("state.trainable_params"));
  if (fs::exists(dir / "report.csv")) {
    std::ifstream is(dir / "report.csv");
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      std::istringstream ls(line);
      std::string lang, wer;
      std::getline(ls, lang, ',');
      std::getline(ls, wer, ',');
      if (lang == "avg") {
        s.avg = std::stod(wer);
      } else {
        s.wer[std::stoi(lang)] = std::stod(wer);
      }
    }
    return s;
  }
  std::ifstream is(dir / "eval.tsv");
  std::string line, last;
  while (std::getline(is, line)) {
    if (!line.empty()) last = line;
  }
  if (last.empty()) throw std::runtime_error("run " + dir.string() + " has neither report.csv nor eval.tsv results");
  std::istringstream ls(last);
  std::string field;
  std::getline(ls, field, '\t');
  std::getline(ls, field, '\t');
  s.avg = std::stod(field);
  while (std::getline(ls, field, '\t')) {
    const auto colon = field.find(':');
    s.wer[std::stoi(field.substr(0, colon))] = std::stod(field.substr(colon + 1));
  }
  return s;
}

int cmd_report(const std::vector<std::string>& runs, const fs::path& out_path, std::ostream& out) {
  std::vector<RunSummary> rows;
  std::set<int> langs;
  for (const auto& r : runs) {
    require_file(r, "run directory");
    rows.push_back(summarize_run(r));
    for (const auto& [l, w] : rows.back().wer) langs.insert(l);
  }
  std::ostringstream md;
  md << "| Model | Mode | Params | Trainable |";
  for (int l : langs) md << " L" << l << " |";
  md << " Avg |\n|---|---|---:|---:|";
  for (std::size_t i = 0; i < langs.size(); ++i) md << "---:|";
  md << "---:|\n";
  for (const auto& r : rows) {
    md << "| " << r.name << " | " << r.mode << " | " << r.total << " | " << r.trainable << " |";
    for (int l : langs) md << ' ' << (r.wer.count(l) ? fmt(r.wer.at(l)) : std::string("-")) << " |";
    md << ' ' << fmt(r.avg) << " |\n";
  }
  std::ofstream os(out_path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + out_path.string());
  os << md.str();
  out << md.str();
  return kOk;
}

}  // namespace

std::size_t eval_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LINGUA_CTC_THREADS")) {
    const long cap = std::atol(env);
    if (cap >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
  }
  return n;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multilingual CTC speech recognition toolkit"};
  app.require_subcommand(1);

  std::vector<std::string> corpora;
  std::size_t vocab_size = 0;
  std::string vocab_out;
  auto* bv = app.add_subcommand("build-vocab", "Train a byte-level BPE vocabulary on transcripts");
  bv->add_option("--corpus", corpora, "Transcript TSV files")->required();
  bv->add_option("--size", vocab_size, "Target vocabulary size (>= 256)")->required();
  bv->add_option("--out", vocab_out, "Output vocabulary file")->required();

  std::string spec, gen_out;
  std::uint64_t gen_seed = 1;
  bool force = false;
  auto* gd = app.add_subcommand("gen-data", "Generate a synthetic multilingual corpus");
  gd->add_option("--spec", spec, "Corpus spec file")->required();
  gd->add_option("--seed", gen_seed, "Random seed");
  gd->add_option("--out", gen_out, "Output directory")->required();
  gd->add_flag("--force", force, "Overwrite a non-empty output directory");

  std::string config, mode, run_out;
  long seed = -1, steps = 0;
  auto* tr = app.add_subcommand("train", "Train a model from a run config");
  tr->add_option("--config", config, "Run config file")->required();
  tr->add_option("--mode", mode, "Override model.mode");
  tr->add_option("--seed", seed, "Override run.seed");
  tr->add_option("--out", run_out, "Override run.out");
  tr->add_option("--steps", steps, "Override train.steps");
  tr->add_flag("--force", force, "Overwrite a non-empty run directory");

  std::string base;
  auto* ft = app.add_subcommand("finetune", "Parameter-efficient fine-tuning of a frozen fl-adapter checkpoint");
  ft->add_option("--base", base, "Base checkpoint (directory)")->required();
  ft->add_option("--config", config, "Fine-tuning config file")->required();
  ft->add_option("--seed", seed, "Override run.seed");
  ft->add_option("--out", run_out, "Override run.out");
  ft->add_option("--steps", steps, "Override train.steps");
  ft->add_flag("--force", force, "Overwrite a non-empty run directory");

  std::string ckpt, data_stem, lang, report, hyp;
  auto* ev = app.add_subcommand("eval", "Decode a dataset and score word error rates");
  ev->add_option("--ckpt", ckpt, "Checkpoint or run directory")->required();
  ev->add_option("--data", data_stem, "Dataset path without extension")->required();
  ev->add_option("--lang", lang, "Language id, or 'all' for each utterance's own language");
  ev->add_option("--report", report, "CSV report path")->required();
  ev->add_option("--hyp", hyp, "Optional hypothesis TSV output");

  std::vector<std::string> runs;
  std::string table_out;
  auto* rp = app.add_subcommand("report", "Tabulate runs as markdown");
  rp->add_option("--runs", runs, "Run directories");
  rp->add_option("--out", table_out, "Markdown output")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    if (*bv) return cmd_build_vocab(corpora, vocab_size, vocab_out, out);
    if (*gd) return cmd_gen_data(spec, gen_seed, gen_out, force, out);
    if (*tr) return cmd_train(config, mode, seed, run_out, steps, force, out);
    if (*ft) return cmd_finetune(base, config, seed, run_out, steps, force, out);
    if (*ev) return cmd_eval(ckpt, data_stem, lang, report, hyp, out);
    if (*rp) return cmd_report(runs, table_out, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const util::ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsageError;
}

}  // namespace lingua::cli
