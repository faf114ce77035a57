#include <cstdio>
#include "fedexdnn/client.hpp"
using namespace fedexdnn;

int main() {
    for (std::uint64_t seed : {41ULL, 141ULL, 241ULL}) {
        SynthData train = synth_multimode(1, 3, 12, 64, 0.0, 0.05, seed);
        SynthData held = synth_multimode(1, 3, 12, 32, 0.3, 0.05, seed + 1);
        for (std::size_t K : {1UL, 2UL, 4UL}) {
            for (std::size_t epochs : {20UL, 40UL}) {
                ClientShard sh;
                sh.client_id = 0;
                sh.train = strip_labels(train.segments);
                GlobalModel g;
                EncoderConfig cfg{.input_dim = 3, .num_layers = 2, .hidden_dim = 8, .embed_dim = 8};
                g.encoder = encoder_init(cfg, seed + 2);
                g.exemplars = ExemplarSet::random_unit(K, 8, seed + 3);
                TrainConfig tc;
                tc.local_epochs = epochs;
                tc.batch_size = 32;
                tc.seed = seed + 4;
                LossConfig lc;
                LocalModel m = local_train(sh, g, lc, tc);
                double nm = 0, am = 0; std::size_t nn = 0, na = 0;
                for (const Segment& s : held.segments) {
                    double sc = anomaly_score(m.encoder, m.exemplars, s.values);
                    if (*s.label == 0) { nm += sc; ++nn; } else { am += sc; ++na; }
                }
                std::printf("seed=%llu K=%zu epochs=%zu loss=%.4f gap=%.4f (n=%.3f a=%.3f)\n",
                            (unsigned long long)seed, K, epochs, m.final_loss,
                            am / na - nm / nn, nm / nn, am / na);
            }
        }
    }
    return 0;
}
