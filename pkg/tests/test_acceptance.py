"""Exit criteria for the package, one test per criterion.

Each test appends a PASS/FAIL line that is printed in the terminal summary
(``pytest tests/test_acceptance.py``).
"""
import itertools
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, FIXTURES
from nedstats.cli import run
from nedstats.collective import exhaustive_opt, hill_climb, lp_relaxation, make_problem, objective
from nedstats.corpus import synth_corpus
from nedstats.kb import Entity, build_kb, mention_prior, relatedness
from nedstats.local import TrainConfig, train_weights
from nedstats.ratio import (
    EstimatorConfig,
    MeanEmbedding,
    class_means,
    estimate_mmd,
    gold_ratio,
    l1_error,
    label_and_collect,
    mmd_objective,
    unlabeled_mean,
)
from nedstats.stats import CoocGraph, entity_bigrams, personalized_pagerank, sense_prior, write_bigrams, write_sense_priors
from oracles import enumerate_objective, grid_min, ppr_power_iteration, relatedness_formula

SHIPPED_SEED = 0


def record(number, name, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] C{number} {name}: {detail}")
    print(ACCEPTANCE_LINES[-1])
    assert ok, detail


def test_c1_mmd_matches_grid_oracle():
    rng = np.random.default_rng(SHIPPED_SEED)
    worst, elapsed = -np.inf, 0.0
    for i in range(200):
        k = 2 if i % 2 == 0 else 3
        d = int(rng.integers(1, 11))
        M = rng.uniform(0, 1, (k, d))
        if i % 4 < 2:
            u = rng.dirichlet(np.ones(k)) @ M + rng.normal(scale=0.1, size=d)
        else:
            u = rng.uniform(-0.5, 1.5, d)
        means = MeanEmbedding(tuple(range(k)), tuple(range(d)), M)
        start = time.perf_counter()
        theta = estimate_mmd(means, u, EstimatorConfig(seed=i))
        elapsed += time.perf_counter() - start
        gap = mmd_objective(M, u, theta.values) - grid_min(M, u, 1e-3)
        worst = max(worst, gap)
    record(
        1,
        "MMD vs grid oracle",
        worst <= 1e-6 and elapsed < 10,
        f"max(objective - grid) = {worst:.3e} (<= 1e-6), estimator time for 200 instances {elapsed:.2f}s (< 10s)",
    )


def test_c2_mmd_recovery(kb_jaguar):
    kb = kb_jaguar
    theta_true = {1: 0.5, 2: 0.3, 3: 0.2}
    train = synth_corpus(kb, {1: 1 / 3, 2: 1 / 3, 3: 1 / 3}, 10_000, SHIPPED_SEED)
    test = synth_corpus(kb, theta_true, 10_000, SHIPPED_SEED + 1)
    means = class_means(train.spots, kb)
    theta = estimate_mmd(means, unlabeled_mean(test.spots, kb))
    err = l1_error(theta, gold_ratio(test, means.classes))
    err_gen = float(sum(abs(theta[c] - p) for c, p in theta_true.items()))
    record(
        2,
        "MMD recovery on synthetic corpus",
        err <= 0.05,
        f"l1(theta_mmd, test gold ratio) = {err:.4f} (<= 0.05); vs generating theta {err_gen:.4f}",
    )


def test_c3_shift_robustness(kb_jaguar):
    kb = kb_jaguar
    train = synth_corpus(kb, {1: 0.6, 2: 0.3, 3: 0.1}, 10_000, SHIPPED_SEED)
    test = synth_corpus(kb, {1: 0.1, 2: 0.3, 3: 0.6}, 10_000, SHIPPED_SEED + 1)
    w = train_weights(train, kb, TrainConfig(epochs=5, learning_rate=0.01, seed=SHIPPED_SEED))
    means = class_means(train.spots, kb)
    truth = gold_ratio(test, means.classes)
    theta_mmd = estimate_mmd(means, unlabeled_mean(test.spots, kb))
    theta_lc = label_and_collect("local", kb, w, test, classes=means.classes)
    e_mmd, e_lc = l1_error(theta_mmd, truth), l1_error(theta_lc, truth)
    record(
        3,
        "shift robustness",
        e_mmd <= e_lc + 0.02,
        f"l1_mmd = {e_mmd:.4f} <= l1_label_and_collect + 0.02 = {e_lc + 0.02:.4f}",
    )


def _random_problem(rng):
    n = int(rng.integers(1, 5))
    cands, node, next_id = [], [], 1
    for _ in range(n):
        m = int(rng.integers(1, 5))
        cands.append(list(range(next_id, next_id + m)))
        next_id += m
        node.append(rng.uniform(0, 1, m))
    edges = {(s, t): rng.uniform(0, 1, (len(cands[s]), len(cands[t]))) for s in range(n) for t in range(s + 1, n)}
    return make_problem(cands, node, edges)


def test_c4_collective_solvers():
    rng = np.random.default_rng(SHIPPED_SEED)
    hits, exceeded, lp_violations = 0, 0, 0
    start = time.perf_counter()
    for _ in range(100):
        p = _random_problem(rng)
        best = max(v for _, v in enumerate_objective(p.cands, p.node, p.edge))
        assert objective(p, exhaustive_opt(p)) == pytest.approx(best, abs=1e-12)
        hc = objective(p, hill_climb(p))
        hits += abs(hc - best) <= 1e-12
        exceeded += hc > best + 1e-12
        lp_violations += lp_relaxation(p).value < best - 1e-7
    elapsed = time.perf_counter() - start
    record(
        4,
        "collective solvers vs exhaustive oracle",
        hits >= 90 and exceeded == 0 and lp_violations == 0 and elapsed < 30,
        f"hill_climb optimal on {hits}/100 (>= 90), exceeded {exceeded}, "
        f"LP bound violations {lp_violations}, {elapsed:.2f}s (< 30s)",
    )


def test_c5_relatedness(kb_small):
    a_in, b_in = {10, 11, 12, 13}, {12, 13, 14, 15, 16, 17, 18, 19}
    ents = [Entity(i, str(i)) for i in [1, 2, *range(10, 20)]]
    kb = build_kb(ents, [(s, 1) for s in a_in] + [(s, 2) for s in b_in], total_pages=1024)
    cases = [(relatedness(kb, 1, 2), -0.25), (relatedness(kb, 1, 1), 0.0)]
    cases.append((relatedness(kb_small, 7, 8), relatedness_formula(3, 2, 1, 10)))
    cases.append((relatedness(kb_small, 1, 4), None))
    exact = all(
        (got is None and want is None) or (got is not None and want is not None and abs(got - want) <= 1e-12)
        for got, want in cases
    )

    rng = np.random.default_rng(SHIPPED_SEED)
    ents = [Entity(i, str(i)) for i in range(50)]
    links = {(int(s), int(d)) for s, d in rng.integers(0, 50, (600, 2))}
    rkb = build_kb(ents, sorted(links))
    asym = sum(relatedness(rkb, a, b) != relatedness(rkb, b, a) for a, b in itertools.product(range(50), repeat=2))
    record(
        5,
        "relatedness exactness and symmetry",
        exact and asym == 0,
        f"{len(cases)} hand cases within 1e-12: {exact}; asymmetric pairs in 50-entity KB: {asym}/2500",
    )


def test_c6_personalized_pagerank():
    rng = np.random.default_rng(SHIPPED_SEED)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 16))
        W = np.triu(rng.uniform(0.01, 1, (n, n)) * (rng.uniform(size=(n, n)) < 0.35), 1)
        weights = {(i, j): W[i, j] for i in range(n) for j in range(i + 1, n) if W[i, j] > 0}
        g = CoocGraph(0, tuple(range(n)), weights)
        # check=True asserts the sum at every iteration
        s = personalized_pagerank(g, damping=0.85, tol=1e-12, check=True)
        ref = ppr_power_iteration(g.adjacency(), 0, 0.85)
        worst = max(worst, float(np.abs(s.scores - ref).max()))
    record(6, "personalized PageRank vs dense oracle", worst <= 1e-8, f"max |score - oracle| = {worst:.2e} (<= 1e-8) on 20 graphs")


def test_c7_counting_golden_files(tmp_path, corpus5, kb_small, name_groups):
    golden = FIXTURES / "golden"
    write_sense_priors(sense_prior(corpus5, name_groups), tmp_path / "sense_priors.tsv")
    write_bigrams(entity_bigrams(corpus5), tmp_path / "bigrams.tsv")
    with open(tmp_path / "mention_priors.tsv", "w") as fh:
        for surface, cands in kb_small.mentions.items():
            for e, _ in cands:
                fh.write(f"{surface}\t{e}\t{mention_prior(kb_small, surface, e):.12f}\n")
    same = {
        name: (tmp_path / name).read_bytes() == (golden / name).read_bytes()
        for name in ("sense_priors.tsv", "bigrams.tsv", "mention_priors.tsv")
    }
    record(7, "counting exactness", all(same.values()), ", ".join(f"{k}: {'identical' if v else 'DIFFERS'}" for k, v in same.items()))


def _snapshot(directory):
    return {p.relative_to(directory).as_posix(): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


def test_c8_cli_determinism(tmp_path, capsys):
    kb = str(FIXTURES / "kb_small")
    jag = str(FIXTURES / "kb_jaguar")
    corpus = str(FIXTURES / "corpus5.jsonl")

    def commands(out, workers):
        o = str(out)
        return [
            ["ingest", "--kb", kb, "--out", f"{o}/ingest"],
            ["synth", "--kb", jag, "--theta", "1:0.6,2:0.3,3:0.1", "--n-spots", "300", "--seed", "5", "--out", f"{o}/train"],
            ["synth", "--kb", jag, "--theta", "1:0.1,2:0.3,3:0.6", "--n-spots", "300", "--seed", "6", "--out", f"{o}/test"],
            ["train", "--kb", kb, "--corpus", corpus, "--epochs", "5", "--seed", "5", "--out", f"{o}/w"],
            *[
                ["tag", "--kb", kb, "--corpus", corpus, "--weights", f"{o}/w/weights.txt", "--solver", solver,
                 "--restarts", "3", "--seed", "5", "--workers", str(workers), "--out", f"{o}/tag_{solver}"]
                for solver in ("local", "hillclimb", "lp")
            ],
            ["stats", "--kb", kb, "--corpus", f"{o}/tag_hillclimb/tagged.jsonl", "--out", f"{o}/stats"],
            ["estimate", "--kb", jag, "--train", f"{o}/train/corpus.jsonl", "--corpus", f"{o}/test/corpus.jsonl", "--out", f"{o}/est"],
            ["compare", "--kb", jag, "--train", f"{o}/train/corpus.jsonl", "--corpus", f"{o}/test/corpus.jsonl",
             "--epochs", "3", "--seed", "5", "--out", f"{o}/cmp"],
        ]

    snapshots, stdouts = [], []
    for run_id, workers in enumerate((1, 1, 3)):
        out = tmp_path / f"run{run_id}"
        codes = [run(argv) for argv in commands(out, workers)]
        assert codes == [0] * len(codes), codes
        stdouts.append(capsys.readouterr().out)
        snapshots.append(_snapshot(out))
    n_files = len(snapshots[0])
    same = snapshots[0] == snapshots[1] == snapshots[2] and stdouts[0] == stdouts[1] == stdouts[2]
    record(
        8,
        "CLI determinism",
        same and n_files >= 14,
        f"{n_files} output files from 7 subcommands byte-identical across 2 runs and worker counts 1/3: {same}",
    )


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
