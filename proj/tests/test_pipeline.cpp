#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "stc/pipeline.hpp"

namespace fs = std::filesystem;
using stc::RunConfig;

namespace {

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string file_bytes(const std::string& path) { return stc::detail::read_file(path); }

// one tiny synthetic corpus shared by every training test: 4 classes x 8
// clips of 12 frames, 6 train / 2 test per class
const stc::Dataset& corpus() {
    static stc::Dataset data = [] {
        auto dir = temp_dir("stc_pipeline_corpus");
        stc::SynthSpec spec;
        spec.classes = 4;
        spec.per_class = 8;
        spec.frames = 12;
        spec.seed = 9;
        spec.signers = 3;
        return stc::synth_generate(spec, dir.string());
    }();
    return data;
}

// desk-scale model: a couple of seconds per pretrain run
RunConfig tiny_config() {
    RunConfig c;
    c.t_prime = 8;
    c.gcn_hidden = 4;
    c.model_dim = 8;
    c.heads = 2;
    c.layers = 1;
    c.ff_dim = 16;
    c.embed_dim = 16;
    c.proj_dim = 8;
    c.out_res = 64;
    c.top_k = 4;
    c.bank_size = 8;
    c.batch = 4;
    c.lr = 0.05;
    c.probe_lr = 0.002;
    c.pretrain_epochs = 2;
    c.finetune_epochs = 2;
    c.probe_epochs = 51;
    c.seed = 5;
    return c;
}

struct PretrainRun {
    std::string ckpt;
    stc::PretrainResult result;
    std::string bytes;
};

// reference pretrain run reused across suites; built on first use
const PretrainRun& shared_pretrain() {
    static PretrainRun run = [] {
        PretrainRun r;
        r.ckpt = (temp_dir("stc_pipeline_shared") / "pretrain.stck").string();
        r.result = stc::pretrain(tiny_config(), corpus(), r.ckpt);
        r.bytes = file_bytes(r.ckpt);
        return r;
    }();
    return run;
}

RunConfig parse_text(const std::string& text) {
    RunConfig c;
    stc::parse_config(text, c);
    return c;
}

}  // namespace

// ---- configuration -------------------------------------------------------------------

TEST(Config, DefaultsMatchTheTrainingRecipe) {
    RunConfig c;
    EXPECT_EQ(c.t_prime, 64);
    EXPECT_EQ(c.model_dim, 128);
    EXPECT_EQ(c.embed_dim, 512);
    EXPECT_EQ(c.proj_dim, 128);
    EXPECT_EQ(c.top_k, 8192);
    EXPECT_EQ(c.bank_size, 16384);
    EXPECT_DOUBLE_EQ(c.key_momentum, 0.99);
    EXPECT_DOUBLE_EQ(c.tau_c, 0.07);
    EXPECT_DOUBLE_EQ(c.tau_1, 0.1);
    EXPECT_DOUBLE_EQ(c.tau_t, 0.05);
    EXPECT_DOUBLE_EQ(c.tau_s, 0.1);
    EXPECT_LT(c.tau_t, c.tau_s);
    EXPECT_DOUBLE_EQ(c.lambda_joint, 0.5);
    EXPECT_DOUBLE_EQ(c.lambda_motion, 0.5);
    EXPECT_TRUE(c.kt_enabled);
    EXPECT_TRUE(c.consistency_enabled);
    EXPECT_DOUBLE_EQ(c.lr, 0.01);
    EXPECT_DOUBLE_EQ(c.sgd_momentum, 0.9);
    EXPECT_EQ(c.lr_decay_every, 50);
    EXPECT_DOUBLE_EQ(c.lr_decay_factor, 0.1);
    EXPECT_EQ(c.batch, 16);
    EXPECT_EQ(c.pretrain_epochs, 150);
    EXPECT_EQ(c.finetune_epochs, 60);
    EXPECT_EQ(c.probe_epochs, 70);
    EXPECT_DOUBLE_EQ(c.probe_lr, 0.01);
    EXPECT_DOUBLE_EQ(c.rotation_max_deg, 13.0);
    EXPECT_EQ(c.seed, 1u);
    EXPECT_NO_THROW(stc::validate_config(c));
}

TEST(Config, ParsesKeyValueLinesCommentsAndBooleans) {
    auto c = parse_text(
        "# training profile\n"
        "\n"
        "batch = 4   # inline comment\n"
        "  tau_c=0.2\n"
        "kt_enabled = false\n"
        "stratify = 1\n"
        "seed = 777\n"
        "lambda_motion = 0\n");
    EXPECT_EQ(c.batch, 4);
    EXPECT_DOUBLE_EQ(c.tau_c, 0.2);
    EXPECT_FALSE(c.kt_enabled);
    EXPECT_TRUE(c.stratify);
    EXPECT_EQ(c.seed, 777u);
    EXPECT_FALSE(c.motion_enabled());
    EXPECT_TRUE(c.joint_enabled());
}

TEST(Config, RejectsUnknownKeysAndMalformedLines) {
    EXPECT_THROW(parse_text("bactch = 4\n"), stc::Error);
    EXPECT_THROW(parse_text("batch\n"), stc::Error);
    EXPECT_THROW(parse_text("batch =\n"), stc::Error);
    EXPECT_THROW(parse_text("= 4\n"), stc::Error);
    EXPECT_THROW(parse_text("batch = four\n"), stc::Error);
    EXPECT_THROW(parse_text("batch = 4x\n"), stc::Error);
    EXPECT_THROW(parse_text("tau_c = warm\n"), stc::Error);
    EXPECT_THROW(parse_text("kt_enabled = maybe\n"), stc::Error);
    EXPECT_THROW(parse_text("seed = -1\n"), stc::Error);
    try {
        parse_text("bactch = 4\n");
        FAIL() << "unknown key accepted";
    } catch (const stc::Error& e) {
        EXPECT_NE(std::string(e.what()).find("bactch"), std::string::npos);
    }
}

TEST(Config, ValidationCatchesInconsistentSettings) {
    auto bad = [](auto&& mutate) {
        RunConfig c = tiny_config();
        mutate(c);
        EXPECT_THROW(stc::validate_config(c), stc::Error);
    };
    bad([](RunConfig& c) { c.tau_c = 0; });
    bad([](RunConfig& c) { c.tau_s = -0.1; });
    bad([](RunConfig& c) { c.lambda_joint = -0.5; });
    bad([](RunConfig& c) { c.lambda_joint = 0; c.lambda_motion = 0; });
    bad([](RunConfig& c) { c.lambda_motion = 0; });  // kt needs both branches
    bad([](RunConfig& c) { c.key_momentum = 1.5; });
    bad([](RunConfig& c) { c.sgd_momentum = 1.0; });
    bad([](RunConfig& c) { c.lr = 0; });
    bad([](RunConfig& c) { c.batch = 0; });
    bad([](RunConfig& c) { c.probe_epochs = 0; });
    bad([](RunConfig& c) { c.top_k = 0; });
    bad([](RunConfig& c) { c.bank_size = c.batch - 1; });
    bad([](RunConfig& c) { c.model_dim = 9; });  // heads must divide model_dim
    bad([](RunConfig& c) { c.crop_alpha = 1.5; });

    // the single-branch ablation is valid once the transfer term is off
    RunConfig c = tiny_config();
    c.lambda_motion = 0;
    c.kt_enabled = false;
    EXPECT_NO_THROW(stc::validate_config(c));
}

TEST(Config, LoadReadsAndValidatesAFile) {
    auto dir = temp_dir("stc_pipeline_cfg");
    auto path = (dir / "run.conf").string();
    std::ofstream(path) << "batch = 2\nbank_size = 4\nseed = 42\n";
    auto c = stc::load_config(path);
    EXPECT_EQ(c.batch, 2);
    EXPECT_EQ(c.bank_size, 4);
    EXPECT_EQ(c.seed, 42u);

    std::ofstream(path) << "batch = 8\nbank_size = 4\n";
    EXPECT_THROW(stc::load_config(path), stc::Error);
    EXPECT_THROW(stc::load_config((dir / "missing.conf").string()), stc::Error);
}

// ---- evaluation protocol -------------------------------------------------------------

TEST(Evaluate, HandScoredExampleSeparatesInstanceAndClassMeans) {
    // class 0: two instances, both right; class 1: one instance, wrong
    std::vector<std::vector<float>> scores = {
        {0.9f, 0.1f}, {0.7f, 0.3f}, {0.8f, 0.2f}};
    std::vector<int> labels = {0, 0, 1};
    auto r = stc::evaluate_scores(scores, labels, 2);
    EXPECT_EQ(r.total, 3);
    EXPECT_NEAR(r.pi_top1, 200.0 / 3.0, 1e-9);
    EXPECT_NEAR(r.pc_top1, 50.0, 1e-9);
    EXPECT_NEAR(r.pi_top1, 66.67, 0.005);
    EXPECT_EQ(r.class_total, (std::vector<int>{2, 1}));
    EXPECT_EQ(r.class_top1, (std::vector<int>{2, 0}));
    EXPECT_EQ(r.confusion[0][0], 2);
    EXPECT_EQ(r.confusion[1][0], 1);
    EXPECT_EQ(r.confusion[1][1], 0);
    // with two classes every instance lands inside the top five
    EXPECT_DOUBLE_EQ(r.pi_top5, 100.0);
    EXPECT_DOUBLE_EQ(r.pc_top5, 100.0);
}

TEST(Evaluate, PerfectAndInvertedScoresHitTheBounds) {
    std::vector<std::vector<float>> scores;
    std::vector<int> labels;
    for (int i = 0; i < 12; ++i) {
        std::vector<float> row(6, 0.0f);
        row[static_cast<size_t>(i % 6)] = 1.0f;
        scores.push_back(row);
        labels.push_back(i % 6);
    }
    auto good = stc::evaluate_scores(scores, labels, 6);
    EXPECT_DOUBLE_EQ(good.pi_top1, 100.0);
    EXPECT_DOUBLE_EQ(good.pc_top1, 100.0);
    EXPECT_DOUBLE_EQ(good.pi_top5, 100.0);

    for (auto& l : labels) l = (l + 1) % 6;  // argmax now always misses
    auto bad = stc::evaluate_scores(scores, labels, 6);
    EXPECT_DOUBLE_EQ(bad.pi_top1, 0.0);
    EXPECT_DOUBLE_EQ(bad.pc_top1, 0.0);
}

TEST(Evaluate, TiesRankTowardTheLowerClassIndex) {
    auto order = stc::score_ranking({0.5f, 0.5f, 0.9f, 0.5f});
    EXPECT_EQ(order, (std::vector<int>{2, 0, 1, 3}));

    std::vector<std::vector<float>> scores = {{0.5f, 0.5f}, {0.5f, 0.5f}};
    auto r = stc::evaluate_scores(scores, {0, 1}, 2);
    EXPECT_EQ(r.class_top1[0], 1);
    EXPECT_EQ(r.class_top1[1], 0);
}

TEST(Evaluate, TopFiveCountsMembershipAtRankBoundaries) {
    // descending scores place class c at rank c
    std::vector<float> row = {8, 7, 6, 5, 4, 3, 2, 1};
    auto at_rank = [&](int y) {
        return stc::evaluate_scores({row}, {y}, 8);
    };
    EXPECT_DOUBLE_EQ(at_rank(0).pi_top1, 100.0);
    EXPECT_DOUBLE_EQ(at_rank(4).pi_top1, 0.0);
    EXPECT_DOUBLE_EQ(at_rank(4).pi_top5, 100.0);  // rank 5 of 5
    EXPECT_DOUBLE_EQ(at_rank(5).pi_top5, 0.0);    // rank 6 misses
}

TEST(Evaluate, AbsentClassesStayOutOfTheClassMean) {
    std::vector<std::vector<float>> scores = {{1, 0, 0}, {1, 0, 0}};
    auto r = stc::evaluate_scores(scores, {0, 1}, 3);
    // class 0 perfect, class 1 zero, class 2 unseen: mean over two classes
    EXPECT_NEAR(r.pc_top1, 50.0, 1e-9);
    EXPECT_EQ(r.class_total[2], 0);
}

TEST(Evaluate, RandomScoresSitNearChanceLevel) {
    stc::Rng rng(123);
    int n = 2000, classes = 4;
    std::vector<std::vector<float>> scores;
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) {
        std::vector<float> row(static_cast<size_t>(classes));
        for (auto& v : row) v = static_cast<float>(rng.uniform(0.0, 1.0));
        scores.push_back(row);
        labels.push_back(rng.uniform_int(0, classes - 1));
    }
    auto r = stc::evaluate_scores(scores, labels, classes);
    EXPECT_NEAR(r.pi_top1, 25.0, 3.0);  // three sigma of the binomial draw
    EXPECT_NEAR(r.pc_top1, 25.0, 3.5);
}

TEST(Evaluate, RejectsMalformedInputs) {
    std::vector<std::vector<float>> ok = {{1, 0}};
    EXPECT_THROW(stc::evaluate_scores({}, {}, 2), stc::Error);
    EXPECT_THROW(stc::evaluate_scores(ok, {0, 1}, 2), stc::Error);
    EXPECT_THROW(stc::evaluate_scores(ok, {2}, 2), stc::Error);
    EXPECT_THROW(stc::evaluate_scores(ok, {-1}, 2), stc::Error);
    EXPECT_THROW(stc::evaluate_scores(ok, {0}, 3), stc::Error);
    EXPECT_THROW(stc::evaluate_scores(ok, {0}, 1), stc::Error);
}

// ---- score files and fusion ------------------------------------------------------------

namespace {

stc::ScoreFile random_scores(int n, int classes, uint64_t seed) {
    stc::Rng rng(seed);
    stc::ScoreFile sf;
    sf.classes = classes;
    for (int i = 0; i < n; ++i) {
        sf.ids.push_back("clip_" + std::to_string(i));
        std::vector<float> row(static_cast<size_t>(classes));
        for (auto& v : row) v = static_cast<float>(rng.uniform(-2.0, 2.0));
        sf.scores.push_back(row);
    }
    return sf;
}

}  // namespace

TEST(ScoreFiles, RoundTripIsExact) {
    auto dir = temp_dir("stc_pipeline_scores");
    auto path = (dir / "scores.csv").string();
    auto sf = random_scores(17, 5, 42);
    stc::write_scores(path, sf.ids, sf.scores);
    auto back = stc::read_scores(path);
    EXPECT_EQ(back.classes, 5);
    EXPECT_EQ(back.ids, sf.ids);
    ASSERT_EQ(back.scores.size(), sf.scores.size());
    for (size_t i = 0; i < sf.scores.size(); ++i)
        for (int c = 0; c < 5; ++c)
            EXPECT_EQ(back.scores[i][static_cast<size_t>(c)],
                      sf.scores[i][static_cast<size_t>(c)])
                << "row " << i << " col " << c;

    std::ifstream f(path);
    std::string head;
    std::getline(f, head);
    EXPECT_EQ(head, "id,score_0,score_1,score_2,score_3,score_4");
}

TEST(ScoreFiles, RejectsCorruptInput) {
    auto dir = temp_dir("stc_pipeline_badscores");
    auto write = [&](const std::string& name, const std::string& text) {
        auto p = (dir / name).string();
        std::ofstream(p) << text;
        return p;
    };
    EXPECT_THROW(stc::read_scores((dir / "missing.csv").string()), stc::Error);
    EXPECT_THROW(stc::read_scores(write("h.csv", "clip,score_0\na,1\n")), stc::Error);
    EXPECT_THROW(stc::read_scores(write("c.csv", "id,score_0,score_1\na,1\n")),
                 stc::Error);
    EXPECT_THROW(
        stc::read_scores(write("d.csv", "id,score_0,score_1\na,1,2\na,3,4\n")),
        stc::Error);
    EXPECT_THROW(
        stc::read_scores(write("f.csv", "id,score_0,score_1\na,1,2x\n")), stc::Error);
    EXPECT_THROW(
        stc::read_scores(write("n.csv", "id,score_0,score_1\na,1,nan\n")), stc::Error);
    EXPECT_THROW(stc::read_scores(write("e.csv", "id,score_0,score_1\n")), stc::Error);
    EXPECT_THROW(
        stc::read_scores(write("o.csv", "id,score_1,score_0\na,1,2\n")), stc::Error);
}

TEST(Fusion, RequiresCoincidingIdSets) {
    auto a = random_scores(3, 2, 1);
    auto b = random_scores(3, 2, 2);
    b.ids[1] = "somewhere_else";
    try {
        stc::fuse_score_files(a, b);
        FAIL() << "divergent ids accepted";
    } catch (const stc::Error& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("clip_1"), std::string::npos);
        EXPECT_NE(msg.find("somewhere_else"), std::string::npos);
    }
    auto c = random_scores(3, 4, 3);
    EXPECT_THROW(stc::fuse_score_files(a, c), stc::Error);
}

TEST(Fusion, WithItselfDoublesScoresAndKeepsTheRanking) {
    auto a = random_scores(9, 4, 7);
    auto fused = stc::fuse_score_files(a, a);
    for (size_t i = 0; i < a.ids.size(); ++i)
        for (int c = 0; c < 4; ++c)
            EXPECT_EQ(fused.scores[i][static_cast<size_t>(c)],
                      a.scores[i][static_cast<size_t>(c)] * 2.0f);
    std::vector<int> labels = {0, 1, 2, 3, 0, 1, 2, 3, 0};
    auto ra = stc::evaluate_scores(a.scores, labels, 4);
    auto rf = stc::evaluate_scores(fused.scores, labels, 4);
    EXPECT_DOUBLE_EQ(ra.pi_top1, rf.pi_top1);
    EXPECT_DOUBLE_EQ(ra.pc_top1, rf.pc_top1);
}

TEST(Fusion, ZeroScoresAreANoOpEvenWhenRowsArePermuted) {
    auto a = random_scores(6, 3, 11);
    stc::ScoreFile zero;
    zero.classes = 3;
    for (int i = 5; i >= 0; --i) {  // reversed row order on purpose
        zero.ids.push_back("clip_" + std::to_string(i));
        zero.scores.push_back({0.0f, 0.0f, 0.0f});
    }
    auto fused = stc::fuse_score_files(a, zero);
    EXPECT_EQ(fused.ids, a.ids);
    for (size_t i = 0; i < a.scores.size(); ++i)
        EXPECT_EQ(fused.scores[i], a.scores[i]);
}

TEST(Fusion, ComplementaryScoresFlipTheWinner) {
    stc::ScoreFile a, b;
    a.classes = b.classes = 3;
    a.ids = {"u", "v"};
    b.ids = {"v", "u"};  // order differs; join is by id
    a.scores = {{0.6f, 0.3f, 0.1f}, {0.2f, 0.5f, 0.3f}};
    b.scores = {{0.1f, 0.0f, 0.2f}, {0.0f, 0.4f, 0.0f}};
    auto fused = stc::fuse_score_files(a, b);
    ASSERT_EQ(fused.ids, a.ids);
    EXPECT_EQ(fused.scores[0], (std::vector<float>{0.6f, 0.3f + 0.4f, 0.1f}));
    EXPECT_EQ(fused.scores[1], (std::vector<float>{0.2f + 0.1f, 0.5f, 0.3f + 0.2f}));
    // "u" flips from class 0 to class 1; "v" keeps class 1 on the tie
    EXPECT_EQ(stc::score_ranking(fused.scores[0])[0], 1);
    EXPECT_EQ(stc::score_ranking(fused.scores[1])[0], 1);
}

TEST(Fusion, LabelsComeFromManifestStems) {
    const auto& data = corpus();
    auto test_idx = data.indices(stc::Split::Test);
    std::vector<std::string> ids;
    for (int i : test_idx) ids.push_back(stc::sample_id(data.samples[static_cast<size_t>(i)]));
    auto labels = stc::labels_for_ids(data, ids);
    ASSERT_EQ(labels.size(), test_idx.size());
    for (size_t i = 0; i < ids.size(); ++i)
        EXPECT_EQ(labels[i], data.samples[static_cast<size_t>(test_idx[i])].label);
    EXPECT_THROW(stc::labels_for_ids(data, {"no_such_clip"}), stc::Error);
}

// ---- label-budget subsets ---------------------------------------------------------------

TEST(Subset, FullBudgetReturnsTheWholeTrainSplit) {
    const auto& data = corpus();
    auto all = stc::percent_subset(data, 1.0, 5, true);
    EXPECT_EQ(all, data.indices(stc::Split::Train));
    EXPECT_THROW(stc::percent_subset(data, 0.0, 5, true), stc::Error);
    EXPECT_THROW(stc::percent_subset(data, -0.2, 5, true), stc::Error);
    EXPECT_THROW(stc::percent_subset(data, 1.01, 5, true), stc::Error);
}

TEST(Subset, StratifiedDrawKeepsPerClassCounts) {
    const auto& data = corpus();
    auto half = stc::percent_subset(data, 0.5, 5, true);
    EXPECT_EQ(half.size(), 12u);  // 3 of 6 per class
    EXPECT_TRUE(std::is_sorted(half.begin(), half.end()));
    std::vector<int> per_class(4, 0);
    for (int idx : half) {
        const auto& s = data.samples[static_cast<size_t>(idx)];
        EXPECT_EQ(s.split, stc::Split::Train);
        per_class[static_cast<size_t>(s.label)]++;
    }
    EXPECT_EQ(per_class, (std::vector<int>{3, 3, 3, 3}));
}

TEST(Subset, SmallerBudgetsNestInsideLargerOnes) {
    const auto& data = corpus();
    auto s20 = stc::percent_subset(data, 1.0 / 3.0, 5, true);  // 2 per class
    auto s40 = stc::percent_subset(data, 2.0 / 3.0, 5, true);  // 4 per class
    auto s60 = stc::percent_subset(data, 5.0 / 6.0, 5, true);  // 5 per class
    EXPECT_EQ(s20.size(), 8u);
    EXPECT_EQ(s40.size(), 16u);
    EXPECT_EQ(s60.size(), 20u);
    std::set<int> big(s60.begin(), s60.end());
    std::set<int> mid(s40.begin(), s40.end());
    for (int idx : s20) EXPECT_TRUE(mid.count(idx)) << idx;
    for (int idx : s40) EXPECT_TRUE(big.count(idx)) << idx;
}

TEST(Subset, FallsBackToUnstratifiedWhenAClassWouldVanish) {
    const auto& data = corpus();
    std::string warning;
    auto tiny = stc::percent_subset(data, 0.05, 5, true, &warning);
    EXPECT_EQ(tiny.size(), 1u);  // max(1, round(0.05 * 24))
    EXPECT_NE(warning.find("zero samples"), std::string::npos);

    warning.clear();
    auto plain = stc::percent_subset(data, 0.5, 5, false, &warning);
    EXPECT_EQ(plain.size(), 12u);
    EXPECT_TRUE(warning.empty());
}

TEST(Subset, IsDeterministicPerSeed) {
    const auto& data = corpus();
    EXPECT_EQ(stc::percent_subset(data, 0.5, 5, true),
              stc::percent_subset(data, 0.5, 5, true));
    EXPECT_NE(stc::percent_subset(data, 0.5, 5, true),
              stc::percent_subset(data, 0.5, 6, true));
}

// ---- pre-training -----------------------------------------------------------------------

TEST(Pretrain, LogsEveryStepAndSavesALoadableCheckpoint) {
    const auto& run = shared_pretrain();
    auto cfg = tiny_config();
    EXPECT_EQ(run.result.steps_per_epoch, 6);  // 24 train clips / batch 4
    ASSERT_EQ(run.result.steps.size(), 12u);
    for (const auto& s : run.result.steps) {
        EXPECT_TRUE(std::isfinite(s.total));
        EXPECT_DOUBLE_EQ(s.lr, cfg.lr);  // first decay lands after epoch 50
        EXPECT_GE(s.con_joint, 0.0);
        EXPECT_GE(s.con_motion, 0.0);
        EXPECT_GE(s.kt, 0.0);
    }
    auto entries = stc::checkpoint_map(stc::load_checkpoint(run.ckpt));
    auto kinds = stc::detail::checkpoint_modalities(entries);
    EXPECT_EQ(kinds.size(), 2u);
    EXPECT_TRUE(entries.count("joint.proj.w1"));
    EXPECT_TRUE(entries.count("motion.hand.gw1"));
    EXPECT_FALSE(entries.count("joint.head.w"));
}

TEST(Pretrain, FirstStepWarmsUpTheBanksBeforeContrast) {
    const auto& steps = shared_pretrain().result.steps;
    ASSERT_GE(steps.size(), 2u);
    // step 0: banks are empty, only the consistency term trains
    EXPECT_EQ(steps[0].cl_joint, 0.0);
    EXPECT_EQ(steps[0].cl_motion, 0.0);
    EXPECT_EQ(steps[0].kt, 0.0);
    EXPECT_GT(steps[0].con_joint, 0.0);
    EXPECT_GT(steps[0].con_motion, 0.0);
    // step 1: one batch of keys is stored, every term is live
    EXPECT_GT(steps[1].cl_joint, 0.0);
    EXPECT_GT(steps[1].cl_motion, 0.0);
    EXPECT_GT(steps[1].kt, 0.0);
}

TEST(Pretrain, TotalIsTheDeclaredWeightedSumOfLoggedTerms) {
    // every logged component is an exact float, so the weighted sum can be
    // replayed bit for bit: 0.5 (cl + con) per branch plus the transfer term
    for (const auto& s : shared_pretrain().result.steps) {
        float joint = 0.5f * (static_cast<float>(s.cl_joint) +
                              static_cast<float>(s.con_joint));
        float motion = 0.5f * (static_cast<float>(s.cl_motion) +
                               static_cast<float>(s.con_motion));
        float expect = (joint + motion) + static_cast<float>(s.kt);
        EXPECT_EQ(static_cast<float>(s.total), expect)
            << "epoch " << s.epoch << " step " << s.step;
    }
}

TEST(Pretrain, SameSeedReproducesTheRunBitForBit) {
    const auto& run = shared_pretrain();
    auto dir = temp_dir("stc_pipeline_repro");
    auto ckpt = (dir / "again.stck").string();
    auto again = stc::pretrain(tiny_config(), corpus(), ckpt);
    ASSERT_EQ(again.steps.size(), run.result.steps.size());
    for (size_t i = 0; i < again.steps.size(); ++i) {
        EXPECT_EQ(again.steps[i].total, run.result.steps[i].total) << "step " << i;
        EXPECT_EQ(again.steps[i].kt, run.result.steps[i].kt) << "step " << i;
    }
    EXPECT_EQ(file_bytes(ckpt), run.bytes);
}

TEST(Pretrain, DifferentSeedsDiverge) {
    auto dir = temp_dir("stc_pipeline_seed");
    auto cfg = tiny_config();
    cfg.seed += 1;
    cfg.pretrain_epochs = 1;
    auto ckpt = (dir / "other.stck").string();
    auto other = stc::pretrain(cfg, corpus(), ckpt);
    EXPECT_NE(other.steps[0].total, shared_pretrain().result.steps[0].total);
    EXPECT_NE(file_bytes(ckpt), shared_pretrain().bytes);
}

TEST(Pretrain, SingleBranchRunKeepsTheOtherModalityOut) {
    auto dir = temp_dir("stc_pipeline_single");
    auto cfg = tiny_config();
    cfg.lambda_motion = 0;
    cfg.kt_enabled = false;
    cfg.pretrain_epochs = 1;
    auto ckpt = (dir / "joint.stck").string();
    auto run = stc::pretrain(cfg, corpus(), ckpt);
    for (const auto& s : run.steps) {
        EXPECT_EQ(s.cl_motion, 0.0);
        EXPECT_EQ(s.con_motion, 0.0);
        EXPECT_EQ(s.kt, 0.0);
        float expect = 0.5f * (static_cast<float>(s.cl_joint) +
                               static_cast<float>(s.con_joint));
        EXPECT_EQ(static_cast<float>(s.total), expect);
    }
    auto entries = stc::checkpoint_map(stc::load_checkpoint(ckpt));
    auto kinds = stc::detail::checkpoint_modalities(entries);
    ASSERT_EQ(kinds.size(), 1u);
    EXPECT_EQ(kinds[0], stc::Modality::Joint);
}

TEST(Pretrain, ConsistencyFreeRunSkipsTheLossLessWarmupStep) {
    auto dir = temp_dir("stc_pipeline_nocon");
    auto cfg = tiny_config();
    cfg.consistency_enabled = false;
    cfg.pretrain_epochs = 1;
    auto run = stc::pretrain(cfg, corpus(), (dir / "nocon.stck").string());
    ASSERT_EQ(run.steps.size(), 6u);
    EXPECT_EQ(run.steps[0].total, 0.0);  // nothing to optimize yet
    EXPECT_GT(run.steps[1].cl_joint, 0.0);
    EXPECT_GT(run.steps[1].kt, 0.0);
    EXPECT_EQ(run.steps[1].con_joint, 0.0);
    EXPECT_EQ(run.steps[1].con_motion, 0.0);
}

TEST(Pretrain, ZeroEpochsStillWritesTheInitialEncoder) {
    auto dir = temp_dir("stc_pipeline_zeroep");
    auto cfg = tiny_config();
    cfg.pretrain_epochs = 0;
    auto ckpt = (dir / "init.stck").string();
    auto run = stc::pretrain(cfg, corpus(), ckpt);
    EXPECT_TRUE(run.steps.empty());
    auto entries = stc::checkpoint_map(stc::load_checkpoint(ckpt));
    EXPECT_EQ(stc::detail::checkpoint_modalities(entries).size(), 2u);
}

TEST(Pretrain, LossCsvHasOneRowPerStep) {
    auto dir = temp_dir("stc_pipeline_losscsv");
    auto path = (dir / "losses.csv").string();
    stc::write_pretrain_losses(path, shared_pretrain().result.steps);
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    EXPECT_EQ(line, "epoch,step,lr,total,cl_joint,con_joint,cl_motion,con_motion,kt");
    int rows = 0;
    while (std::getline(f, line))
        if (!line.empty()) ++rows;
    EXPECT_EQ(rows, 12);
}

// ---- fine-tuning ------------------------------------------------------------------------

TEST(Finetune, TrainsEvaluatesAndReloadsIdentically) {
    auto dir = temp_dir("stc_pipeline_ft");
    auto cfg = tiny_config();
    auto model = (dir / "model.stck").string();
    auto run = stc::finetune(cfg, corpus(), shared_pretrain().ckpt, 1.0,
                             stc::ModalityFilter::All, model);

    EXPECT_EQ(run.steps.size(), 12u);  // 6 steps x 2 epochs
    for (const auto& s : run.steps) EXPECT_TRUE(std::isfinite(s.loss));
    EXPECT_EQ(run.eval.report.total, 8);
    EXPECT_EQ(run.eval.report.classes, 4);
    ASSERT_EQ(run.eval.scores.size(), 8u);
    for (const auto& row : run.eval.scores) {
        ASSERT_EQ(row.size(), 4u);
        float sum = 0;
        for (float v : row) {
            EXPECT_GE(v, 0.0f);
            sum += v;
        }
        EXPECT_NEAR(sum, 1.0f, 1e-5);  // scores are class probabilities
    }

    // the saved model carries encoders and heads and reproduces the
    // evaluation exactly: save, load, forward
    auto entries = stc::checkpoint_map(stc::load_checkpoint(model));
    EXPECT_TRUE(entries.count("joint.head.w"));
    EXPECT_TRUE(entries.count("motion.head.b"));
    auto back = stc::eval_checkpoint(cfg, corpus(), model);
    EXPECT_EQ(back.ids, run.eval.ids);
    ASSERT_EQ(back.scores.size(), run.eval.scores.size());
    for (size_t i = 0; i < back.scores.size(); ++i)
        EXPECT_EQ(back.scores[i], run.eval.scores[i]) << "row " << i;
    EXPECT_DOUBLE_EQ(back.report.pi_top1, run.eval.report.pi_top1);
    EXPECT_DOUBLE_EQ(back.report.pc_top1, run.eval.report.pc_top1);
}

TEST(Finetune, LoadsThePretrainedEncoderWeights) {
    auto cfg = tiny_config();
    cfg.finetune_epochs = 0;  // pure evaluation of the starting point
    auto from_ckpt = stc::finetune(cfg, corpus(), shared_pretrain().ckpt, 1.0);
    auto from_scratch = stc::finetune(cfg, corpus(), "", 1.0);
    ASSERT_EQ(from_ckpt.eval.scores.size(), from_scratch.eval.scores.size());
    bool differ = false;
    for (size_t i = 0; i < from_ckpt.eval.scores.size(); ++i)
        if (from_ckpt.eval.scores[i] != from_scratch.eval.scores[i]) differ = true;
    EXPECT_TRUE(differ);  // two epochs of pre-training must leave a trace
}

TEST(Finetune, ModalityFilterTrainsASingleBranch) {
    auto dir = temp_dir("stc_pipeline_ftfilter");
    auto cfg = tiny_config();
    cfg.finetune_epochs = 1;
    auto model = (dir / "joint_only.stck").string();
    auto run = stc::finetune(cfg, corpus(), shared_pretrain().ckpt, 1.0,
                             stc::ModalityFilter::JointOnly, model);
    EXPECT_EQ(run.eval.report.total, 8);
    auto entries = stc::checkpoint_map(stc::load_checkpoint(model));
    for (const auto& [name, e] : entries)
        EXPECT_EQ(name.rfind("joint.", 0), 0u) << name;
    EXPECT_TRUE(entries.count("joint.head.w"));

    // a joint-only starting point cannot serve the motion branch
    auto joint_cfg = tiny_config();
    joint_cfg.lambda_motion = 0;
    joint_cfg.kt_enabled = false;
    EXPECT_THROW(stc::finetune(joint_cfg, corpus(), "", 1.0,
                               stc::ModalityFilter::MotionOnly),
                 stc::Error);
}

TEST(Finetune, LabelBudgetShrinksTheTrainingSet) {
    auto cfg = tiny_config();
    cfg.finetune_epochs = 1;
    auto run = stc::finetune(cfg, corpus(), "", 1.0 / 3.0);
    EXPECT_EQ(run.steps.size(), 2u);  // 8 clips / batch 4
    std::string warning;
    auto tiny = stc::finetune(cfg, corpus(), "", 0.05,
                              stc::ModalityFilter::All, "", &warning);
    EXPECT_EQ(tiny.steps.size(), 1u);
    EXPECT_NE(warning.find("zero samples"), std::string::npos);
}

TEST(Finetune, IsDeterministicPerSeed) {
    auto cfg = tiny_config();
    cfg.finetune_epochs = 1;
    auto a = stc::finetune(cfg, corpus(), shared_pretrain().ckpt, 1.0);
    auto b = stc::finetune(cfg, corpus(), shared_pretrain().ckpt, 1.0);
    ASSERT_EQ(a.steps.size(), b.steps.size());
    for (size_t i = 0; i < a.steps.size(); ++i)
        EXPECT_EQ(a.steps[i].loss, b.steps[i].loss);
    for (size_t i = 0; i < a.eval.scores.size(); ++i)
        EXPECT_EQ(a.eval.scores[i], b.eval.scores[i]);
}

TEST(EvalCheckpoint, RejectsModelsWithoutAHead) {
    auto cfg = tiny_config();
    try {
        stc::eval_checkpoint(cfg, corpus(), shared_pretrain().ckpt);
        FAIL() << "pretrain checkpoint accepted as a fine-tuned model";
    } catch (const stc::Error& e) {
        EXPECT_NE(std::string(e.what()).find("not a fine-tuned model"),
                  std::string::npos);
    }
}

TEST(EvalCheckpoint, RejectsClassCountMismatch) {
    auto dir = temp_dir("stc_pipeline_classes");
    stc::SynthSpec spec;
    spec.classes = 2;
    spec.per_class = 4;
    spec.frames = 12;
    spec.seed = 3;
    auto two_class = stc::synth_generate(spec, (dir / "data").string());

    auto cfg = tiny_config();
    cfg.finetune_epochs = 0;
    auto model = (dir / "model.stck").string();
    stc::finetune(cfg, corpus(), "", 1.0, stc::ModalityFilter::All, model);
    try {
        stc::eval_checkpoint(cfg, two_class, model);
        FAIL() << "class count mismatch accepted";
    } catch (const stc::Error& e) {
        EXPECT_NE(std::string(e.what()).find("do not match the dataset"),
                  std::string::npos);
    }
}

// ---- linear probe -----------------------------------------------------------------------

TEST(Probe, LearningRateDropsTenfoldAtEpochFifty) {
    auto cfg = tiny_config();  // probe_epochs = 51 spans the drop
    auto run = stc::linear_probe(cfg, corpus(), shared_pretrain().ckpt);
    ASSERT_EQ(run.steps.size(), 51u * 6u);
    for (const auto& s : run.steps) {
        if (s.epoch == 49) {
            EXPECT_DOUBLE_EQ(s.lr, 0.002);
        }
        if (s.epoch == 50) {
            EXPECT_DOUBLE_EQ(s.lr, 0.0002);
        }
        EXPECT_TRUE(std::isfinite(s.loss));
    }
    EXPECT_EQ(run.eval.report.total, 8);
    EXPECT_EQ(run.eval.ids.size(), 8u);
}

TEST(Probe, IsDeterministicAndLeavesTheCheckpointUntouched) {
    auto cfg = tiny_config();
    cfg.probe_epochs = 3;
    auto before = file_bytes(shared_pretrain().ckpt);
    auto a = stc::linear_probe(cfg, corpus(), shared_pretrain().ckpt);
    auto b = stc::linear_probe(cfg, corpus(), shared_pretrain().ckpt);
    EXPECT_EQ(file_bytes(shared_pretrain().ckpt), before);
    ASSERT_EQ(a.steps.size(), b.steps.size());
    for (size_t i = 0; i < a.steps.size(); ++i)
        EXPECT_EQ(a.steps[i].loss, b.steps[i].loss);
    for (size_t i = 0; i < a.eval.scores.size(); ++i)
        EXPECT_EQ(a.eval.scores[i], b.eval.scores[i]);
}

TEST(Probe, TrainingLossDecreasesOnTheWhole) {
    auto cfg = tiny_config();
    auto run = stc::linear_probe(cfg, corpus(), shared_pretrain().ckpt);
    double first = 0, last = 0;
    for (size_t i = 0; i < 6; ++i) first += run.steps[i].loss;
    for (size_t i = run.steps.size() - 6; i < run.steps.size(); ++i)
        last += run.steps[i].loss;
    EXPECT_LT(last, first);
}

// ---- embedding export -------------------------------------------------------------------

TEST(Export, WritesOneRowPerSampleAndIsReproducible) {
    auto dir = temp_dir("stc_pipeline_export");
    auto cfg = tiny_config();
    auto path = (dir / "embed.csv").string();
    stc::export_embeddings(cfg, corpus(), shared_pretrain().ckpt, path);

    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    EXPECT_EQ(header.rfind("id,label,joint_0,", 0), 0u);
    EXPECT_NE(header.find("joint_15,motion_0"), std::string::npos);
    EXPECT_NE(header.find(",motion_15"), std::string::npos);
    int rows = 0;
    std::string line, first_row;
    while (std::getline(f, line))
        if (!line.empty()) {
            if (rows == 0) first_row = line;
            ++rows;
        }
    EXPECT_EQ(rows, 32);
    EXPECT_EQ(first_row.rfind("c000_s000,0,", 0), 0u);  // manifest order

    auto again = (dir / "embed2.csv").string();
    stc::export_embeddings(cfg, corpus(), shared_pretrain().ckpt, again);
    EXPECT_EQ(file_bytes(path), file_bytes(again));
}

TEST(Export, AbsentModalityExportsZeros) {
    auto dir = temp_dir("stc_pipeline_export1");
    auto cfg = tiny_config();
    cfg.lambda_motion = 0;
    cfg.kt_enabled = false;
    cfg.pretrain_epochs = 1;
    auto ckpt = (dir / "joint.stck").string();
    stc::pretrain(cfg, corpus(), ckpt);
    auto path = (dir / "embed.csv").string();
    stc::export_embeddings(cfg, corpus(), ckpt, path);

    std::ifstream f(path);
    std::string line;
    std::getline(f, line);  // header
    ASSERT_TRUE(static_cast<bool>(std::getline(f, line)));
    // the last 16 cells of every row are the absent motion branch
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    ASSERT_EQ(cells.size(), 2u + 32u);
    bool joint_nonzero = false;
    for (size_t i = 2; i < 18; ++i)
        if (cells[i] != "0") joint_nonzero = true;
    EXPECT_TRUE(joint_nonzero);
    for (size_t i = 18; i < 34; ++i) EXPECT_EQ(cells[i], "0");
}
