#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>

#include "dsthcn/config.hpp"
#include "dsthcn/csvio.hpp"
#include "dsthcn/data.hpp"
#include "dsthcn/model.hpp"
#include "dsthcn/rng.hpp"
#include "dsthcn/train.hpp"

namespace fs = std::filesystem;
using namespace dsthcn;

namespace {

int env_threads() {
    const char* s = std::getenv("DSTHCN_THREADS");
    if (!s) return 0;
    const int v = std::atoi(s);
    return v > 0 ? v : 0;
}

struct LoadedData {
    Dataset data;
    SkeletonDefinition sk;
};

// read + stream derivation + optional preprocessing + optional dual correlation
LoadedData load_data(const std::string& path, const RunConfig& rc) {
    LoadedData ld;
    ld.data = read_skl(path);
    ld.data.validate();
    if (ld.data.skeleton_id != 1 && ld.data.skeleton_id != 2)
        throw input_error(path + ": custom skeleton ids are not supported by the CLI");
    ld.sk = skeleton_by_id(ld.data.skeleton_id);
    if (rc.preprocess) {
        for (auto& s : ld.data.samples) s = preprocess(s, ld.sk);
    }
    ld.data = derive_stream(ld.data, stream_from_name(rc.stream), ld.sk);
    if (rc.dual_correlation) ld.data = dual_correlation_dataset(ld.data);
    return ld;
}

// model dims follow the data that will actually be fed in
void fit_config_to_data(RunConfig& rc, const Dataset& d) {
    if (d.samples.empty()) throw input_error("dataset is empty");
    rc.model.c_in = d.samples[0].tensor.dim(0);
    rc.model.frames = d.samples[0].tensor.dim(1);
    rc.model.num_classes = d.class_count;
    rc.model.validate();
}

CrossProjections random_projections(int V, int E, int T, uint64_t seed) {
    std::mt19937_64 rng(seed);
    CrossProjections p;
    p.mu_st = Tensor({E, T});
    p.phi_st = Tensor({V, T});
    p.mu_ts = Tensor({T, V});
    p.phi_ts_l = Tensor({T, V});
    p.phi_ts_r = Tensor({E, V});
    auto fill = [&](Tensor& t, int fan) {
        const double lim = std::sqrt(1.0 / fan);
        for (double& v : t.data) v = uniform_draw(rng, -lim, lim);
    };
    fill(p.mu_st, E);
    fill(p.phi_st, V);
    fill(p.mu_ts, T);
    fill(p.phi_ts_l, T);
    fill(p.phi_ts_r, E);
    return p;
}

void dump_incidence(const std::string& dir, const std::string& stem, const IncidenceMatrix& inc) {
    csv::write_incidence(dir + "/" + stem + "_h.csv", inc);
    csv::write_edge_weights(dir + "/" + stem + "_w.csv", inc);
    csv::write_operator(dir + "/" + stem + "_op.csv", normalize(inc));
}

void dump_feature(const std::string& path, const Tensor& f) {
    const int C = f.dim(0), T = f.dim(1), V = f.dim(2);
    std::vector<std::string> header = {"c", "t"};
    for (int v = 0; v < V; ++v) header.push_back("v" + std::to_string(v));
    std::vector<double> rows(static_cast<std::size_t>(C) * T * (V + 2));
    std::size_t idx = 0;
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t) {
            rows[idx++] = c;
            rows[idx++] = t;
            for (int v = 0; v < V; ++v) rows[idx++] = f.at3(c, t, v);
        }
    csv::write_matrix(path, rows.data(), C * T, V + 2, header);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dst-hcn skeleton action recognition"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic SKL dataset");
    std::string gen_out, gen_skeleton = "ntu25";
    int gen_classes = 4, gen_per_class = 32, gen_frames = 64;
    uint64_t gen_seed = 1;
    double gen_noise = 0.01;
    gen->add_option("--out", gen_out, "output .skl path")->required();
    gen->add_option("--classes", gen_classes, "number of classes");
    gen->add_option("--per-class", gen_per_class, "samples per class");
    gen->add_option("--frames", gen_frames, "frames per sample");
    gen->add_option("--skeleton", gen_skeleton, "ntu25 or ucla20");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--noise", gen_noise, "gaussian noise sigma");

    // train
    auto* tr = app.add_subcommand("train", "train a model");
    std::string tr_data, tr_val, tr_cfg, tr_out;
    int tr_threads = 0, tr_epochs = 0;
    tr->add_option("--data", tr_data, "training .skl")->required();
    tr->add_option("--val", tr_val, "validation .skl")->required();
    tr->add_option("--config", tr_cfg, "run config json");
    tr->add_option("--out", tr_out, "output directory")->required();
    tr->add_option("--threads", tr_threads, "forward-pass worker threads");
    tr->add_option("--epochs", tr_epochs, "override epoch count");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ev_data, ev_cfg, ev_ckpt, ev_scores;
    int ev_threads = 0;
    ev->add_option("--data", ev_data, "evaluation .skl")->required();
    ev->add_option("--config", ev_cfg, "run config json")->required();
    ev->add_option("--checkpoint", ev_ckpt, "parameter manifest json")->required();
    ev->add_option("--scores", ev_scores, "write per-sample scores csv");
    ev->add_option("--threads", ev_threads, "forward-pass worker threads");

    // fuse
    auto* fu = app.add_subcommand("fuse", "fuse score csvs from several streams");
    std::vector<std::string> fu_scores, fu_streams;
    std::vector<double> fu_weights;
    fu->add_option("--scores", fu_scores, "score csv (repeat per stream)")->required();
    fu->add_option("--weights", fu_weights, "fusion weight per score file")->delimiter(',');
    fu->add_option("--streams", fu_streams, "stream name per score file (sets default weights)")
        ->delimiter(',');

    // inspect
    auto* in = app.add_subcommand("inspect", "dump constructed hypergraphs as csv");
    std::string in_what, in_out, in_skeleton = "ntu25", in_data;
    int in_k = 4, in_clusters = 5, in_sample = 0, in_ktime = 5;
    uint64_t in_seed = 1;
    in->add_option("--what", in_what, "tph|spatial-knn|spatial-kmeans|spatial-parts|cross")
        ->required();
    in->add_option("--out", in_out, "output directory")->required();
    in->add_option("--skeleton", in_skeleton, "ntu25 or ucla20");
    in->add_option("--data", in_data, ".skl input for tph/cross");
    in->add_option("--sample", in_sample, "sample index for tph/cross");
    in->add_option("--k", in_k, "spatial k-NN neighbourhood size");
    in->add_option("--k-time", in_ktime, "temporal k-NN neighbourhood size");
    in->add_option("--clusters", in_clusters, "k-means cluster count");
    in->add_option("--seed", in_seed, "seed for k-means / projections");

    // export-features
    auto* ex = app.add_subcommand("export-features", "dump a block intermediate as csv");
    std::string ex_data, ex_cfg, ex_ckpt, ex_out, ex_feature = "F_out";
    int ex_sample = 0, ex_block = 0, ex_topo = 0, ex_threads = 0;
    ex->add_option("--data", ex_data, ".skl input")->required();
    ex->add_option("--config", ex_cfg, "run config json")->required();
    ex->add_option("--checkpoint", ex_ckpt, "parameter manifest json")->required();
    ex->add_option("--out", ex_out, "output csv path")->required();
    ex->add_option("--sample", ex_sample, "sample index");
    ex->add_option("--block", ex_block, "block index");
    ex->add_option("--feature", ex_feature, "A|B|C|D|E|F_out|F_sum|Z_out");
    ex->add_option("--topo", ex_topo, "spatial topology index (A/D/E/F_out)");
    ex->add_option("--threads", ex_threads, "forward-pass worker threads");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const auto sk = skeleton_by_name(gen_skeleton);
            const auto d = gen_synthetic(gen_classes, gen_per_class, gen_frames, sk,
                                         skeleton_id(gen_skeleton), gen_seed, gen_noise);
            write_skl(gen_out, d);
            std::cout << "wrote " << d.samples.size() << " samples to " << gen_out << "\n";
        } else if (tr->parsed()) {
            RunConfig rc = tr_cfg.empty() ? RunConfig{} : run_config_from_json_file(tr_cfg);
            if (tr_epochs > 0) rc.train.epochs = tr_epochs;
            const int et = env_threads();
            if (tr_threads > 0)
                rc.model.threads = tr_threads;
            else if (et > 0)
                rc.model.threads = et;
            auto train_ld = load_data(tr_data, rc);
            auto val_ld = load_data(tr_val, rc);
            fit_config_to_data(rc, train_ld.data);
            fs::create_directories(tr_out);
            {
                std::ofstream f(tr_out + "/config.json");
                f << run_config_to_json(rc);
            }
            Model model(train_ld.sk, rc.model);
            std::cout << "trainable parameters: " << model.param_count() << "\n";
            auto res = train_loop(model, train_ld.data, val_ld.data, rc.train, tr_out,
                                  [](const EpochMetrics& e) {
                                      std::cout << "epoch " << e.epoch << " lr "
                                                << csv::format_g(e.lr) << " train_loss "
                                                << csv::format_g(e.train_loss) << " train_acc "
                                                << csv::format_g(e.train_acc) << " val_loss "
                                                << csv::format_g(e.val_loss) << " val_acc "
                                                << csv::format_g(e.val_acc) << "\n";
                                  });
            csv::write_metrics(tr_out + "/metrics.csv", res.history);
            std::cout << "best epoch " << res.best_epoch << " val_acc "
                      << csv::format_g(res.best_val_acc) << "\n";
        } else if (ev->parsed()) {
            RunConfig rc = run_config_from_json_file(ev_cfg);
            const int et = env_threads();
            if (ev_threads > 0)
                rc.model.threads = ev_threads;
            else if (et > 0)
                rc.model.threads = et;
            auto ld = load_data(ev_data, rc);
            fit_config_to_data(rc, ld.data);
            Model model(ld.sk, rc.model);
            model.store().load(ev_ckpt);
            auto r = evaluate(model, ld.data, rc.train.batch_size);
            std::cout << "loss " << csv::format_g(r.loss) << " acc " << csv::format_g(r.acc)
                      << "\n";
            if (!ev_scores.empty()) {
                std::vector<int> labels;
                labels.reserve(ld.data.samples.size());
                for (const auto& s : ld.data.samples) labels.push_back(s.label);
                csv::write_scores(ev_scores, r.scores, labels);
            }
        } else if (fu->parsed()) {
            std::vector<Tensor> scores;
            std::vector<int> labels, first_labels;
            for (const auto& p : fu_scores) {
                scores.push_back(csv::read_scores(p, labels));
                if (first_labels.empty())
                    first_labels = labels;
                else if (labels != first_labels)
                    throw input_error("fuse: label columns differ between score files");
            }
            std::vector<double> w = fu_weights;
            if (w.empty()) {
                if (!fu_streams.empty()) {
                    if (fu_streams.size() != fu_scores.size())
                        throw input_error("fuse: --streams count must match --scores");
                    for (const auto& s : fu_streams)
                        w.push_back(default_stream_weight(stream_from_name(s)));
                } else {
                    w.assign(fu_scores.size(), 1.0);
                }
            }
            auto pred = fuse_scores(scores, w);
            int correct = 0;
            for (std::size_t i = 0; i < pred.size(); ++i)
                if (pred[i] == first_labels[i]) ++correct;
            std::cout << "fused acc "
                      << csv::format_g(static_cast<double>(correct) /
                                       static_cast<double>(pred.size()))
                      << " over " << pred.size() << " samples\n";
        } else if (in->parsed()) {
            fs::create_directories(in_out);
            const auto sk = skeleton_by_name(in_skeleton);
            if (in_what == "spatial-knn") {
                dump_incidence(in_out, "spatial_knn", spatial_knn(sk, in_k));
            } else if (in_what == "spatial-kmeans") {
                dump_incidence(in_out, "spatial_kmeans", spatial_kmeans(sk, in_clusters, in_seed));
            } else if (in_what == "spatial-parts") {
                dump_incidence(in_out, "spatial_parts", spatial_parts(sk));
            } else if (in_what == "tph" || in_what == "cross") {
                if (in_data.empty()) throw input_error("inspect: --data is required for " + in_what);
                auto d = read_skl(in_data);
                if (in_sample < 0 || in_sample >= static_cast<int>(d.samples.size()))
                    throw input_error("inspect: sample index out of range");
                const Tensor& x = d.samples[static_cast<std::size_t>(in_sample)].tensor;
                std::mt19937_64 rng(in_seed);
                const int cr = tph_reduced_channels(x.dim(0));
                Tensor reducer({x.dim(0), cr});
                const double lim = std::sqrt(1.0 / x.dim(0));
                for (double& v : reducer.data) v = uniform_draw(rng, -lim, lim);
                auto h_t = tph_knn(x, std::min(in_ktime, x.dim(1)), reducer);
                if (in_what == "tph") {
                    dump_incidence(in_out, "tph", h_t);
                } else {
                    auto h_n = spatial_knn(sk, in_k);
                    auto proj =
                        random_projections(sk.joint_count, h_n.edges, x.dim(1), in_seed + 1);
                    auto cr2 = cross_hypergraphs(h_n, h_t, proj);
                    dump_incidence(in_out, "cross_st", cr2.h_st);
                    dump_incidence(in_out, "cross_ts", cr2.h_ts);
                }
            } else {
                throw input_error("inspect: unknown --what '" + in_what + "'");
            }
            std::cout << "wrote " << in_what << " dumps to " << in_out << "\n";
        } else if (ex->parsed()) {
            RunConfig rc = run_config_from_json_file(ex_cfg);
            const int et = env_threads();
            if (ex_threads > 0)
                rc.model.threads = ex_threads;
            else if (et > 0)
                rc.model.threads = et;
            auto ld = load_data(ex_data, rc);
            fit_config_to_data(rc, ld.data);
            Model model(ld.sk, rc.model);
            model.store().load(ex_ckpt);
            if (ex_sample < 0 || ex_sample >= static_cast<int>(ld.data.samples.size()))
                throw input_error("export-features: sample index out of range");
            if (ex_block < 0 || ex_block >= model.block_count())
                throw input_error("export-features: block index out of range");
            Tensor x({1, rc.model.c_in, rc.model.frames, ld.sk.joint_count});
            std::memcpy(x.ptr(), ld.data.samples[static_cast<std::size_t>(ex_sample)].tensor.ptr(),
                        x.numel() * sizeof(double));
            model.forward(x, false);
            dump_feature(ex_out, model.block(ex_block).feature(ex_feature, ex_topo, 0));
            std::cout << "wrote " << ex_feature << " of block " << ex_block << " to " << ex_out
                      << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
