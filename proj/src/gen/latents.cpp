#include "gen/latents.h"

#include <cstdio>

#include "audio/synth.h"
#include "core/blob.h"
#include "vae/source_vae.h"

namespace ms {

EncodeStats encode_latents(const std::string& dataset_dir, const std::string& vae_ckpt,
                           const std::string& out_path, bool mixture, bool verbose) {
    auto m = vae_load(vae_ckpt);
    auto dirs = list_track_dirs(dataset_dir);
    check(!dirs.empty(), ErrKind::data, "encode-latents: no tracks under " + dataset_dir);

    LatentFile lf;
    lf.K = mixture ? 1 : kNumSources;
    lf.C = (int)m->cfg.latent_channels;
    lf.count = 0;

    for (size_t i = 0; i < dirs.size(); i++) {
        SourceSet s = load_stems(dirs[i]);
        check(s.sample_rate == (int)m->cfg.sample_rate, ErrKind::data,
              "encode-latents: track sample rate " + std::to_string(s.sample_rate) +
                  " != vae " + std::to_string(m->cfg.sample_rate));
        std::vector<TenF> zs;
        if (mixture) {
            zs.push_back(vae_latent_features(*m, mix(s).samples));
        } else {
            for (int k = 0; k < kNumSources; k++)
                zs.push_back(vae_latent_features(*m, s.stems[(size_t)k].samples));
        }
        int T = (int)zs[0].shape[1];
        if (lf.count == 0) lf.T = T;
        check(T == lf.T, ErrKind::data,
              "encode-latents: track " + dirs[i] + " latent length " + std::to_string(T) +
                  " != " + std::to_string(lf.T) + " (dataset must be uniform)");
        for (auto& z : zs) lf.data.insert(lf.data.end(), z.v.begin(), z.v.end());
        lf.count++;
        if (verbose && (i % 16 == 0 || i + 1 == dirs.size())) {
            std::printf("[encode] %zu/%zu tracks\r", i + 1, dirs.size());
            std::fflush(stdout);
        }
    }
    if (verbose) std::printf("\n");

    latents_save(out_path, lf);
    EncodeStats st;
    st.count = lf.count;
    st.K = lf.K;
    st.C = lf.C;
    st.T = lf.T;
    st.out_path = out_path;
    return st;
}

}  // namespace ms
