#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "audio/synth.h"
#include "cli/config.h"
#include "core/blob.h"
#include "core/error.h"
#include "diffusion/train_diffusion.h"
#include "eval/embed.h"
#include "eval/frechet.h"
#include "eval/subfad.h"
#include "gen/generate.h"
#include "gen/latents.h"
#include "vae/train_vae.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ms;

namespace {

// options shared by every subcommand
struct Common {
    std::string preset = "desk";
    std::string config_path;
    std::vector<std::string> sets;
    uint64_t seed = 0;
    bool json_out = false, dry_run = false;
    CLI::Option* seed_opt = nullptr;

    uint64_t resolve_seed() const {
        if (seed_opt && seed_opt->count()) return seed;
        if (const char* env = std::getenv("MSLDM_SEED")) {
            char* end = nullptr;
            uint64_t v = std::strtoull(env, &end, 10);
            check(end && *end == '\0', ErrKind::validation,
                  "MSLDM_SEED is not an integer: " + std::string(env));
            return v;
        }
        return 0;
    }
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--preset", c.preset, "parameter preset (desk | paper-faithful)")
        ->default_str("desk");
    cmd->add_option("--config", c.config_path, "JSON config overriding the preset");
    cmd->add_option("--set", c.sets, "key=value override, e.g. --set diff.lr=1e-4")
        ->take_all();
    c.seed_opt = cmd->add_option("--seed", c.seed, "rng seed (falls back to $MSLDM_SEED, then 0)");
    cmd->add_flag("--json", c.json_out, "machine-readable result on stdout");
    cmd->add_flag("--dry-run", c.dry_run, "print the resolved config and exit");
}

// true if the command should stop after printing the resolved config
bool handle_dry_run(const Common& c, const std::string& command, const json& cfg) {
    if (!c.dry_run) return false;
    json j;
    j["command"] = command;
    j["preset"] = c.preset;
    j["seed"] = c.resolve_seed();
    j["dry_run"] = true;
    j["config"] = cfg;
    std::printf("%s\n", j.dump(2).c_str());
    return true;
}

void emit(const Common& c, const json& j, const std::string& human) {
    if (c.json_out)
        std::printf("%s\n", j.dump().c_str());
    else
        std::fputs(human.c_str(), stdout);
}

std::vector<int> parse_given(const std::string& csv) {
    std::vector<int> idx;
    size_t pos = 0;
    while (pos <= csv.size()) {
        size_t com = csv.find(',', pos);
        std::string name = csv.substr(pos, com == std::string::npos ? com : com - pos);
        if (!name.empty()) {
            int k = instrument_index(name);
            check(k >= 0, ErrKind::validation, "unknown instrument \"" + name + "\"");
            idx.push_back(k);
        }
        if (com == std::string::npos) break;
        pos = com + 1;
    }
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    check(!idx.empty(), ErrKind::validation, "--given names no instruments");
    check((int)idx.size() < kNumSources, ErrKind::validation,
          "--given names every instrument; nothing to generate");
    return idx;
}

json fad_result(const char* metric, double value, int64_t count, const std::string& embedder) {
    json j;
    j["metric"] = metric;
    j["value"] = value;
    j["count"] = count;
    j["embedder"] = embedder;
    return j;
}

void cmd_make_dataset(const Common& c, const std::string& out, int num_tracks, double duration,
                      int sample_rate, double silence_prob) {
    json cfg = resolve_config(c.preset, c.config_path, c.sets);
    if (handle_dry_run(c, "make-dataset", cfg)) return;
    int sr = sample_rate > 0 ? sample_rate : cfg.at("sample_rate").get<int>();
    TrackSpec tmpl;
    tmpl.duration_s = duration;
    tmpl.silence_prob = silence_prob;
    make_dataset(tmpl, num_tracks, sr, c.resolve_seed(), out);
    json j{{"command", "make-dataset"}, {"tracks", num_tracks},
           {"sample_rate", sr},         {"duration_s", duration},
           {"seed", c.resolve_seed()},  {"out", out},
           {"manifest", out + "/manifest.json"}};
    char buf[256];
    std::snprintf(buf, sizeof buf, "wrote %d tracks (%gs @ %d Hz) to %s\n", num_tracks, duration,
                  sr, out.c_str());
    emit(c, j, buf);
}

void cmd_train_vae(const Common& c, const std::string& data, const std::string& out,
                   int64_t steps) {
    json cfg = resolve_config(c.preset, c.config_path, c.sets);
    if (handle_dry_run(c, "train-vae", cfg)) return;
    VaeConfig vc = vae_from_config(cfg);
    fs::create_directories(out);
    LockFile lock(out + "/vae.ckpt");
    VaeTrainStats st = train_vae(data, vc, steps, c.resolve_seed(), out, !c.json_out);
    json j{{"command", "train-vae"},      {"steps", st.steps},
           {"first_loss", st.first_total}, {"final_loss", st.final_total},
           {"ckpt", st.ckpt_path},        {"csv", st.csv_path},
           {"seed", c.resolve_seed()}};
    char buf[256];
    std::snprintf(buf, sizeof buf, "vae: %lld steps, loss %.4f -> %.4f, ckpt %s\n",
                  (long long)st.steps, st.first_total, st.final_total, st.ckpt_path.c_str());
    emit(c, j, buf);
}

void cmd_train_diffusion(const Common& c, const std::string& latents, const std::string& out,
                         int64_t steps, const std::string& mode_s) {
    json cfg = resolve_config(c.preset, c.config_path, c.sets);
    if (handle_dry_run(c, "train-diffusion", cfg)) return;
    DiffusionMode mode = diffusion_mode_parse(mode_s);
    DiffusionConfig dc = diff_from_config(cfg);
    LatentFile lf = latents_load(latents);  // header decides the net width
    int64_t in_ch = mode == DiffusionMode::multi_source ? (int64_t)lf.K * lf.C : (int64_t)lf.C;
    UNetConfig uc = unet_from_config(cfg, in_ch);
    DiffTrainOpts opts = train_opts_from_config(cfg, mode);
    fs::create_directories(out);
    LockFile lock(out + "/diffusion.ckpt");
    DiffTrainStats st =
        train_diffusion(latents, dc, uc, steps, c.resolve_seed(), out, opts, !c.json_out);
    json j{{"command", "train-diffusion"}, {"mode", mode_s},
           {"steps", st.steps},            {"first_loss", st.first_loss},
           {"final_loss", st.final_loss},  {"ema100", st.ema100},
           {"ema_final", st.ema_final},    {"ckpts", st.ckpt_paths},
           {"csv", st.csv_path},           {"seed", c.resolve_seed()}};
    char buf[256];
    std::snprintf(buf, sizeof buf, "diffusion(%s): %lld steps, loss %.5f -> %.5f, %zu ckpt(s)\n",
                  mode_s.c_str(), (long long)st.steps, st.first_loss, st.final_loss,
                  st.ckpt_paths.size());
    emit(c, j, buf);
}

void cmd_encode_latents(const Common& c, const std::string& data, const std::string& vae,
                        const std::string& out, bool mixture) {
    json cfg = resolve_config(c.preset, c.config_path, c.sets);
    if (handle_dry_run(c, "encode-latents", cfg)) return;
    EncodeStats st = encode_latents(data, vae, out, mixture, !c.json_out);
    json j{{"command", "encode-latents"}, {"count", st.count}, {"K", st.K},
           {"C", st.C},                   {"T", st.T},         {"out", st.out_path}};
    char buf[256];
    std::snprintf(buf, sizeof buf, "encoded %lld tracks -> [%d,%d,%d] latents in %s\n",
                  (long long)st.count, st.K, st.C, st.T, st.out_path.c_str());
    emit(c, j, buf);
}

void cmd_generate(const Common& c, const std::vector<std::string>& ckpts, const std::string& vae,
                  const std::string& out, int count, double duration, int64_t steps_ov,
                  double churn_ov) {
    json cfg = resolve_config(c.preset, c.config_path, c.sets);
    if (handle_dry_run(c, "generate", cfg)) return;
    SampleOverrides ov;
    ov.n_steps = steps_ov;
    ov.s_churn = churn_ov;
    GenMeta meta;
    auto items =
        generate_total(ckpts, vae, duration, c.resolve_seed(), count, ov, &meta, !c.json_out);
    write_gen_items(out, items, c.resolve_seed(), meta);
    json j{{"command", "generate"}, {"items", (int64_t)items.size()},
           {"out", out},            {"mode", meta.mode},
           {"n_steps", meta.n_steps}, {"s_churn", meta.s_churn},
           {"seed", c.resolve_seed()}};
    char buf[256];
    std::snprintf(buf, sizeof buf, "generated %zu item(s) (%s, %lld steps) under %s\n",
                  items.size(), meta.mode.c_str(), (long long)meta.n_steps, out.c_str());
    emit(c, j, buf);
}

void cmd_generate_partial(const Common& c, const std::string& ckpt, const std::string& vae,
                          const std::string& track, const std::string& given_csv,
                          const std::string& out, int64_t steps_ov, double churn_ov) {
    json cfg = resolve_config(c.preset, c.config_path, c.sets);
    if (handle_dry_run(c, "generate-partial", cfg)) return;
    std::vector<int> given = parse_given(given_csv);
    SourceSet ss = load_stems(track);
    SampleOverrides ov;
    ov.n_steps = steps_ov;
    ov.s_churn = churn_ov;
    GenMeta meta;
    GenItem it = generate_partial(ss, given, ckpt, vae, c.resolve_seed(), ov, &meta, !c.json_out);
    write_gen_items(out, {it}, c.resolve_seed(), meta);
    json names = json::array(), gen_names = json::array();
    for (int k : given) names.push_back(kInstruments[(size_t)k]);
    for (int k = 0; k < kNumSources; k++)
        if (std::find(given.begin(), given.end(), k) == given.end())
            gen_names.push_back(kInstruments[(size_t)k]);
    json j{{"command", "generate-partial"}, {"out", out},
           {"given", names},               {"generated", gen_names},
           {"mode", meta.mode},            {"n_steps", meta.n_steps},
           {"s_churn", meta.s_churn},      {"seed", c.resolve_seed()}};
    char buf[256];
    std::snprintf(buf, sizeof buf, "generated %zu stem(s) given %zu under %s\n", gen_names.size(),
                  names.size(), out.c_str());
    emit(c, j, buf);
}

void cmd_embed(const Common& c, const std::string& data, const std::string& out, int64_t count,
               double chunk_seconds) {
    json cfg = resolve_config(c.preset, c.config_path, c.sets);
    if (handle_dry_run(c, "embed", cfg)) return;
    Rng rng = Rng(c.resolve_seed()).stream("chunks");
    auto chunks = chunk_dataset(data, chunk_seconds, count, rng);
    LogMelEmbedder e(chunks.at(0).mix.sample_rate);
    EmbFile f;
    f.count = (int64_t)chunks.size();
    f.d = e.dim();
    for (auto& ch : chunks) {
        auto v = e.embed(ch.mix.samples.data(), (int64_t)ch.mix.samples.size());
        f.data.insert(f.data.end(), v.begin(), v.end());
    }
    emb_save(out, f);
    json j{{"command", "embed"}, {"count", f.count}, {"d", f.d}, {"out", out}};
    char buf[256];
    std::snprintf(buf, sizeof buf, "embedded %lld chunks (d=%d) to %s\n", (long long)f.count, f.d,
                  out.c_str());
    emit(c, j, buf);
}

GaussianStats stats_from_emb(const EmbFile& f, const std::string& path) {
    check(f.count >= 2, ErrKind::data, "need at least 2 embeddings in " + path);
    std::vector<std::vector<float>> rows((size_t)f.count);
    for (int64_t i = 0; i < f.count; i++)
        rows[(size_t)i].assign(f.data.begin() + i * f.d, f.data.begin() + (i + 1) * f.d);
    return gaussian_stats(rows);
}

void cmd_eval_fad(const Common& c, const std::string& ref, const std::string& cand,
                  bool emb_files, int64_t count, double chunk_seconds) {
    json cfg = resolve_config(c.preset, c.config_path, c.sets);
    if (handle_dry_run(c, "eval-fad", cfg)) return;
    double v;
    int64_t n;
    std::string embedder;
    if (emb_files) {
        EmbFile fr = emb_load(ref), fc = emb_load(cand);
        v = frechet_distance(stats_from_emb(fr, ref), stats_from_emb(fc, cand));
        n = fc.count;
        embedder = "file";
    } else {
        // same stream seed on both sides: identical dirs draw identical chunks
        Rng r1 = Rng(c.resolve_seed()).stream("chunks");
        Rng r2 = Rng(c.resolve_seed()).stream("chunks");
        auto cr = chunk_dataset(ref, chunk_seconds, count, r1);
        auto cc = chunk_dataset(cand, chunk_seconds, count, r2);
        check(cr.at(0).mix.sample_rate == cc.at(0).mix.sample_rate, ErrKind::data,
              "eval-fad: reference and candidate sample rates differ");
        LogMelEmbedder e(cr[0].mix.sample_rate);
        std::vector<AudioSeg> ra, ca;
        for (auto& ch : cr) ra.push_back(ch.mix);
        for (auto& ch : cc) ca.push_back(ch.mix);
        v = fad(ra, ca, e);
        n = count;
        embedder = "logmel";
    }
    json j = fad_result("fad", v, n, embedder);
    j["reference"] = ref;
    j["candidate"] = cand;
    char buf[128];
    std::snprintf(buf, sizeof buf, "FAD: %.6f (%lld per side)\n", v, (long long)n);
    emit(c, j, buf);
}

void cmd_eval_subfad(const Common& c, const std::string& ckpt, const std::string& vae,
                     const std::string& test_dir, const std::string& subset, bool all_subsets,
                     int64_t count, double chunk_seconds, int64_t steps_ov, double churn_ov) {
    json cfg = resolve_config(c.preset, c.config_path, c.sets);
    if (handle_dry_run(c, "eval-subfad", cfg)) return;
    check(all_subsets == subset.empty(), ErrKind::validation,
          "pass exactly one of --subset or --all-subsets");
    SampleOverrides ov;
    ov.n_steps = steps_ov;
    ov.s_churn = churn_ov;
    LogMelEmbedder e(dataset_sample_rate(test_dir));
    if (all_subsets) {
        json out = json::object();
        double sum = 0;
        for (auto& name : subset_names()) {
            double v = sub_fad(ckpt, vae, test_dir, subset_indices(name), e, count,
                               c.resolve_seed(), chunk_seconds, ov, !c.json_out);
            out[name] = v;
            sum += v;
            if (!c.json_out) std::printf("%-4s %.6f\n", name.c_str(), v);
        }
        out["Overall"] = sum / (double)subset_names().size();
        if (c.json_out)
            std::printf("%s\n", out.dump().c_str());
        else
            std::printf("%-4s %.6f\n", "Overall", out["Overall"].get<double>());
    } else {
        auto idx = subset_indices(subset);
        double v = sub_fad(ckpt, vae, test_dir, idx, e, count, c.resolve_seed(), chunk_seconds,
                           ov, !c.json_out);
        json j = fad_result("sub-fad", v, count, "logmel");
        j["subset"] = subset_name(idx);
        char buf[128];
        std::snprintf(buf, sizeof buf, "sub-FAD[%s]: %.6f\n", subset_name(idx).c_str(), v);
        emit(c, j, buf);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-source latent diffusion for music: train, generate, evaluate"};
    app.require_subcommand(1);

    // make-dataset
    Common c_mk;
    std::string mk_out;
    int mk_tracks = 8, mk_sr = 0;
    double mk_dur = 8.0, mk_silence = 0.0;
    auto* mk = app.add_subcommand("make-dataset", "synthesize a 4-stem dataset");
    add_common(mk, c_mk);
    mk->add_option("--out", mk_out, "output dataset dir")->required();
    mk->add_option("--num-tracks", mk_tracks, "tracks to synthesize");
    mk->add_option("--duration", mk_dur, "seconds per track");
    mk->add_option("--sample-rate", mk_sr, "sample rate (default: preset)");
    mk->add_option("--silence-prob", mk_silence, "chance a stem is silent");
    mk->callback([&] { cmd_make_dataset(c_mk, mk_out, mk_tracks, mk_dur, mk_sr, mk_silence); });

    // train-vae
    Common c_tv;
    std::string tv_data, tv_out;
    int64_t tv_steps = 2000;
    auto* tv = app.add_subcommand("train-vae", "train the shared source VAE");
    add_common(tv, c_tv);
    tv->add_option("--data", tv_data, "dataset dir")->required();
    tv->add_option("--out", tv_out, "output dir for ckpt + loss csv")->required();
    tv->add_option("--steps", tv_steps, "training steps");
    tv->callback([&] { cmd_train_vae(c_tv, tv_data, tv_out, tv_steps); });

    // train-diffusion
    Common c_td;
    std::string td_latents, td_out, td_mode = "multi-source";
    int64_t td_steps = 5000;
    auto* td = app.add_subcommand("train-diffusion", "train a score model on encoded latents");
    add_common(td, c_td);
    td->add_option("--latents", td_latents, "latents file from encode-latents")->required();
    td->add_option("--out", td_out, "output dir for ckpt(s) + loss csv")->required();
    td->add_option("--steps", td_steps, "training steps");
    td->add_option("--mode", td_mode, "multi-source | independent | mixture");
    td->callback([&] { cmd_train_diffusion(c_td, td_latents, td_out, td_steps, td_mode); });

    // encode-latents
    Common c_el;
    std::string el_data, el_vae, el_out;
    bool el_mix = false;
    auto* el = app.add_subcommand("encode-latents", "encode dataset stems with a trained VAE");
    add_common(el, c_el);
    el->add_option("--data", el_data, "dataset dir")->required();
    el->add_option("--vae", el_vae, "VAE checkpoint")->required();
    el->add_option("--out", el_out, "output latents file")->required();
    el->add_flag("--mixture", el_mix, "encode the mixture instead of the stems");
    el->callback([&] { cmd_encode_latents(c_el, el_data, el_vae, el_out, el_mix); });

    // generate
    Common c_g;
    std::vector<std::string> g_ckpts;
    std::string g_vae, g_out;
    int g_count = 1;
    double g_dur = 4.0, g_churn = -1;
    int64_t g_steps = -1;
    auto* g = app.add_subcommand("generate", "total generation: sample all sources");
    add_common(g, c_g);
    g->add_option("--ckpt", g_ckpts, "diffusion ckpt(s); K ckpts for independent mode")
        ->required()
        ->take_all();
    g->add_option("--vae", g_vae, "VAE checkpoint")->required();
    g->add_option("--out", g_out, "output dir")->required();
    g->add_option("--count", g_count, "items to generate");
    g->add_option("--duration", g_dur, "seconds per item");
    g->add_option("--steps", g_steps, "sampler steps (default: checkpoint)");
    g->add_option("--churn", g_churn, "s_churn override (default: checkpoint)");
    g->callback([&] {
        cmd_generate(c_g, g_ckpts, g_vae, g_out, g_count, g_dur, g_steps, g_churn);
    });

    // generate-partial
    Common c_gp;
    std::string gp_ckpt, gp_vae, gp_track, gp_given, gp_out;
    double gp_churn = -1;
    int64_t gp_steps = -1;
    auto* gp = app.add_subcommand("generate-partial",
                                  "imputation: complete a track's missing sources");
    add_common(gp, c_gp);
    gp->add_option("--ckpt", gp_ckpt, "multi-source diffusion ckpt")->required();
    gp->add_option("--vae", gp_vae, "VAE checkpoint")->required();
    gp->add_option("--track", gp_track, "track dir with the given stems")->required();
    gp->add_option("--given", gp_given, "comma-separated given instruments, e.g. bass,drums")
        ->required();
    gp->add_option("--out", gp_out, "output dir")->required();
    gp->add_option("--steps", gp_steps, "sampler steps (default: checkpoint)");
    gp->add_option("--churn", gp_churn, "s_churn override (default: checkpoint)");
    gp->callback([&] {
        cmd_generate_partial(c_gp, gp_ckpt, gp_vae, gp_track, gp_given, gp_out, gp_steps,
                             gp_churn);
    });

    // embed
    Common c_em;
    std::string em_data, em_out;
    int64_t em_count = 64;
    double em_cs = 2.0;
    auto* em = app.add_subcommand("embed", "dump log-mel chunk embeddings to a file");
    add_common(em, c_em);
    em->add_option("--data", em_data, "dataset dir")->required();
    em->add_option("--out", em_out, "output embeddings file")->required();
    em->add_option("--count", em_count, "chunks to embed");
    em->add_option("--chunk-seconds", em_cs, "chunk length in seconds");
    em->callback([&] { cmd_embed(c_em, em_data, em_out, em_count, em_cs); });

    // eval-fad
    Common c_ef;
    std::string ef_ref, ef_cand;
    bool ef_emb = false;
    int64_t ef_count = 64;
    double ef_cs = 2.0;
    auto* ef = app.add_subcommand("eval-fad", "FAD between two datasets or embedding files");
    add_common(ef, c_ef);
    ef->add_option("--reference", ef_ref, "reference dataset dir (or embeddings file)")
        ->required();
    ef->add_option("--candidate", ef_cand, "candidate dataset dir (or embeddings file)")
        ->required();
    ef->add_flag("--embeddings-file", ef_emb,
                 "treat --reference/--candidate as embedding files");
    ef->add_option("--count", ef_count, "chunks per side");
    ef->add_option("--chunk-seconds", ef_cs, "chunk length in seconds");
    ef->callback([&] { cmd_eval_fad(c_ef, ef_ref, ef_cand, ef_emb, ef_count, ef_cs); });

    // eval-subfad
    Common c_es;
    std::string es_ckpt, es_vae, es_dir, es_subset;
    bool es_all = false;
    int64_t es_count = 8, es_steps = -1;
    double es_cs = 2.0, es_churn = -1;
    auto* es = app.add_subcommand("eval-subfad", "sub-FAD of partial generation per subset");
    add_common(es, c_es);
    es->add_option("--ckpt", es_ckpt, "multi-source diffusion ckpt")->required();
    es->add_option("--vae", es_vae, "VAE checkpoint")->required();
    es->add_option("--test-dir", es_dir, "held-out dataset dir")->required();
    es->add_option("--subset", es_subset, "generated subset, e.g. BD (B,D,G,P initials)");
    es->add_flag("--all-subsets", es_all, "evaluate all 14 subsets + Overall");
    es->add_option("--count", es_count, "chunks per subset");
    es->add_option("--chunk-seconds", es_cs, "chunk length in seconds");
    es->add_option("--steps", es_steps, "sampler steps (default: checkpoint)");
    es->add_option("--churn", es_churn, "s_churn override (default: checkpoint)");
    es->callback([&] {
        cmd_eval_subfad(c_es, es_ckpt, es_vae, es_dir, es_subset, es_all, es_count, es_cs,
                        es_steps, es_churn);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return (int)e.kind;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
