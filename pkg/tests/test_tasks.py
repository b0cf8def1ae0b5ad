import json

import numpy as np
import pytest

from deepthink import (
    BUILTIN_TASKS,
    CapacityError,
    ConfigError,
    DataError,
    EvalConfig,
    ParseError,
    PromptSpec,
    TaskExample,
    ThinkConfig,
    deep_think,
    evaluate,
    get_task,
    load_dataset,
    model_forward,
    predict,
    render_candidate,
    render_demos,
    score_candidate,
)
from deepthink.tasks import CLASSIFICATION, MULTIPLE_CHOICE

from conftest import make_config, make_weights
from oracles import score_reference

TOY = PromptSpec("toy", CLASSIFICATION, "Q: {query}\nA: {label}",
                 verbalizers=("a", "b"))


def toy_dataset():
    rows = [
        ("fast", 1), ("slow", 0), ("sharp", 1), ("dull", 0),
        ("warm", 1), ("cold", 0),
    ]
    return [TaskExample(label=l, query=q) for q, l in rows]


class TestPromptSpec:
    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            PromptSpec("x", "ranking", "{query} {label}")

    def test_classification_needs_verbalizers(self):
        with pytest.raises(ConfigError):
            PromptSpec("x", CLASSIFICATION, "{query} {label}")

    def test_duplicate_verbalizers(self):
        with pytest.raises(ConfigError):
            PromptSpec("x", CLASSIFICATION, "{query} {label}",
                       verbalizers=("a", "a"))

    def test_template_must_use_answer_slot_once(self):
        with pytest.raises(ConfigError):
            PromptSpec("x", CLASSIFICATION, "{query}", verbalizers=("a", "b"))
        with pytest.raises(ConfigError):
            PromptSpec("x", CLASSIFICATION, "{label} {label} {query}",
                       verbalizers=("a", "b"))

    def test_unbound_placeholder(self):
        with pytest.raises(ConfigError):
            PromptSpec("x", CLASSIFICATION, "{query} {mood} {label}",
                       verbalizers=("a", "b"))

    def test_template_table_by_id(self):
        spec = BUILTIN_TASKS["copa"]
        ex = TaskExample(label=0, query="it rained",
                         choices=("ground got wet", "sun came out"),
                         template_id="cause")
        assert spec.template_for(ex) == "{query} because {choice}"
        with pytest.raises(DataError):
            spec.template_for(TaskExample(label=0, query="q", choices=("a", "b"),
                                          template_id="unknown"))


class TestBuiltinTasks:
    def test_all_present(self):
        assert set(BUILTIN_TASKS) == {
            "sst2", "sst5", "mr", "trec", "agnews",
            "copa", "obqa", "qasc", "hellaswag", "winogrande",
        }

    def test_sst2_template_and_labels(self):
        spec = get_task("sst2")
        assert spec.template == "Review: {query}\nSentiment: {label}"
        assert spec.verbalizers == ("negative", "positive")

    def test_trec_six_classes(self):
        assert len(get_task("trec").verbalizers) == 6

    def test_agnews_labels(self):
        assert get_task("agnews").verbalizers == (
            "World", "Sports", "Business", "Technology"
        )

    def test_sst5_five_classes(self):
        assert get_task("sst5").verbalizers == (
            "terrible", "negative", "neutral", "positive", "great"
        )

    def test_winogrande_slot_in_middle(self):
        text, span = render_candidate(
            get_task("winogrande"),
            TaskExample(label=0, query_a="The cup", query_b="was full.",
                        choices=("mug", "jar")),
            0,
        )
        assert text == "The cup mug was full."
        assert text.encode()[span[0]:span[1]] == b"mug"

    def test_unknown_task(self):
        with pytest.raises(ConfigError, match="sst2"):
            get_task("nope")


class TestRenderDemos:
    def test_sst2_one_shot_two_demos(self):
        examples = [
            TaskExample(label=0, query="awful"),
            TaskExample(label=1, query="great"),
            TaskExample(label=0, query="bad"),
        ]
        text = render_demos(get_task("sst2"), examples, n_shot=1, seed=0)
        assert text.count("Review:") == 2
        assert text.count("Sentiment:") == 2
        assert text.endswith("\n")

    def test_absent_class_rejected(self):
        examples = [TaskExample(label=1, query="great")]
        with pytest.raises(DataError):
            render_demos(get_task("sst2"), examples, n_shot=1, seed=0)

    def test_insufficient_examples_rejected(self):
        with pytest.raises(DataError):
            render_demos(TOY, toy_dataset(), n_shot=4, seed=0)

    def test_deterministic(self):
        data = toy_dataset()
        a = render_demos(TOY, data, n_shot=2, seed=9)
        b = render_demos(TOY, data, n_shot=2, seed=9)
        assert a == b

    def test_seed_changes_sample(self):
        data = toy_dataset()
        outs = {render_demos(TOY, data, n_shot=1, seed=s) for s in range(8)}
        assert len(outs) > 1

    def test_multiple_choice_demo_uses_gold_choice(self):
        spec = get_task("obqa")
        examples = [
            TaskExample(label=1, query="Sky color?", choices=("red", "blue")),
            TaskExample(label=0, query="Grass color?", choices=("green", "pink")),
        ]
        text = render_demos(spec, examples, n_shot=1, seed=0)
        assert "blue" in text
        assert "green" in text
        assert "red" not in text


class TestRenderCandidate:
    def test_answer_byte_range(self):
        text, (s, e) = render_candidate(
            TOY, TaskExample(label=0, query="ok"), 1
        )
        assert text == "Q: ok\nA: b"
        assert text.encode()[s:e] == b"b"

    def test_multibyte_query_offsets(self):
        text, (s, e) = render_candidate(
            TOY, TaskExample(label=0, query="café"), 0
        )
        assert text.encode("utf-8")[s:e] == b"a"


class TestScoreCandidate:
    def test_single_token_ordering_matches_last_logits(self, lm_weights):
        prompt = "Q: x\nA: "
        prompt_ids = lm_weights.tokenizer.encode(prompt)
        logits, _ = model_forward(prompt_ids, lm_weights)
        last = logits[-1]
        cands = ["a", "b", "c", "d"]
        scores = [
            score_candidate(lm_weights, None, prompt, c) for c in cands
        ]
        logit_order = np.argsort([last[ord(c)] for c in cands])
        score_order = np.argsort(scores)
        assert list(logit_order) == list(score_order)

    def test_matches_manual_softmax_sum(self, lm_weights):
        tok = lm_weights.tokenizer
        query = "Q: sky\nA: "
        for cand in ("blue", "red"):
            for mode in ("sum_log_prob", "sum_prob"):
                got = score_candidate(lm_weights, None, query, cand, mode=mode)
                ids = tok.encode(query + cand)
                # byte tokenizer: one token per byte of the candidate
                n_ans = len(cand.encode())
                answer_positions = list(range(len(ids) - n_ans, len(ids)))
                logits, _ = model_forward(ids, lm_weights)
                want = score_reference(logits, ids, answer_positions, mode)
                assert abs(got - want) < 1e-5

    def test_position_budget(self, lm_weights):
        long_query = "x" * 400
        with pytest.raises(CapacityError):
            score_candidate(lm_weights, None, long_query, "a")

    def test_prefix_offsets_default_to_prefix_length(self, lm_weights):
        result = deep_think(lm_weights, lm_weights.tokenizer.encode("Q: y\nA: a\n"),
                            ThinkConfig(steps=1))
        s = score_candidate(lm_weights, result.final, "Q: z\nA: ", "a")
        assert np.isfinite(s)


class TestPredict:
    def test_single_candidate(self, lm_weights):
        ex = TaskExample(label=0, query="hm", choices=("only",))
        spec = get_task("obqa")
        assert predict(lm_weights, None, spec, ex) == 0

    def test_planted_winner(self, lm_weights):
        weights = make_weights(make_config(vocab_size=256), seed=5)
        weights.tokenizer = lm_weights.tokenizer
        weights.lnf_b[:] = 5.0
        unembed = np.zeros((256, weights.config.d_model), dtype=np.float32)
        unembed[ord("C")] = 1.0
        weights.unembedding = unembed
        spec = PromptSpec("abc", CLASSIFICATION, "Q: {query}\nA: {label}",
                          verbalizers=("A", "B", "C"))
        ex = TaskExample(label=0, query="pick")
        assert predict(weights, None, spec, ex) == 2

    def test_tie_breaks_to_lowest_index(self, lm_weights):
        spec = get_task("obqa")
        ex = TaskExample(label=0, query="same", choices=("tie", "tie"))
        assert predict(lm_weights, None, spec, ex) == 0

    def test_batch_matches_oracle(self, lm_weights):
        tok = lm_weights.tokenizer
        dataset = toy_dataset()
        for ex in dataset:
            got = predict(lm_weights, None, TOY, ex)
            scores = []
            for c in range(2):
                text, (s, e) = render_candidate(TOY, ex, c)
                ids, spans = tok.encode_with_spans(text)
                rows = [p for p, (a, b) in enumerate(spans)
                        if a < e and b > s and p >= 1]
                logits, _ = model_forward(ids, lm_weights)
                scores.append(score_reference(logits, ids, rows, "sum_log_prob"))
            want = max(range(2), key=lambda i: (scores[i], -i))
            assert got == want


class TestEvaluate:
    def test_saturating_predictor(self, lm_weights):
        spec = get_task("obqa")
        dataset = [
            TaskExample(label=0, query=f"q{i}", choices=("sole",))
            for i in range(3)
        ]
        demo_ids = lm_weights.tokenizer.encode("q0 sole\n")
        report = evaluate(lm_weights, demo_ids, spec, dataset,
                          EvalConfig(t_max=3))
        assert report.accuracies == (1.0, 1.0, 1.0)
        assert report.best_accuracy == 1.0
        assert report.vanilla_accuracy == 1.0

    def test_t1_matches_concatenated_vanilla_icl(self, lm_weights):
        tok = lm_weights.tokenizer
        dataset = toy_dataset()
        demos_text = render_demos(TOY, dataset, n_shot=1, seed=3)
        demo_ids = tok.encode(demos_text)

        result = deep_think(lm_weights, demo_ids,
                            ThinkConfig(steps=1, record_snapshots=True))
        prefix = result.snapshots[0]

        for ex in dataset:
            ours = predict(lm_weights, prefix, TOY, ex)
            scores = []
            for c in range(2):
                text, (s, e) = render_candidate(TOY, ex, c)
                ids, spans = tok.encode_with_spans(text)
                rows = [p for p, (a, b) in enumerate(spans)
                        if a < e and b > s and p >= 1]
                full = list(demo_ids) + list(ids)
                logits, _ = model_forward(full, lm_weights)
                positions = [len(demo_ids) + p for p in rows]
                scores.append(
                    score_reference(logits, full, positions, "sum_log_prob")
                )
            vanilla = max(range(2), key=lambda i: (scores[i], -i))
            assert ours == vanilla

    def test_cost_accounting_exact(self, lm_weights):
        tok = lm_weights.tokenizer
        dataset = toy_dataset()[:4]
        demo_ids = tok.encode(render_demos(TOY, dataset, 1, seed=0))
        report = evaluate(lm_weights, demo_ids, TOY, dataset,
                          EvalConfig(t_max=2))

        expect_ours = 0
        expect_base = 0
        for ex in dataset:
            for c in range(2):
                text, _ = render_candidate(TOY, ex, c)
                n = len(tok.encode(text))
                expect_ours += n
                expect_base += n + len(demo_ids)
        assert report.tokens_ours == expect_ours
        assert report.tokens_baseline == expect_base
        assert report.attn_elements_ours < report.attn_elements_baseline
        assert 0 < report.attn_ratio < 1
        assert report.n_examples == 4

    def test_thread_fanout_is_deterministic(self, lm_weights):
        dataset = toy_dataset()
        demo_ids = lm_weights.tokenizer.encode(
            render_demos(TOY, dataset, 1, seed=1)
        )
        a = evaluate(lm_weights, demo_ids, TOY, dataset,
                     EvalConfig(t_max=2, threads=1))
        b = evaluate(lm_weights, demo_ids, TOY, dataset,
                     EvalConfig(t_max=2, threads=4))
        assert a.accuracies == b.accuracies
        assert a.tokens_ours == b.tokens_ours

    def test_empty_dataset_rejected(self, lm_weights):
        with pytest.raises(DataError):
            evaluate(lm_weights, [1, 2], TOY, [], EvalConfig())

    def test_best_is_max(self, lm_weights):
        dataset = toy_dataset()
        demo_ids = lm_weights.tokenizer.encode(
            render_demos(TOY, dataset, 1, seed=2)
        )
        report = evaluate(lm_weights, demo_ids, TOY, dataset,
                          EvalConfig(t_max=4))
        assert report.best_accuracy == max(report.accuracies)
        assert report.accuracies[report.best_step - 1] == report.best_accuracy
        assert report.vanilla_accuracy == report.accuracies[0]


class TestLoadDataset:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert load_dataset(str(path)) == []

    def test_valid_records(self, tmp_path):
        path = tmp_path / "d.jsonl"
        rows = [
            {"kind": "classification", "query": "good", "label": 1},
            {"kind": "multiple_choice", "query": "why",
             "choices": ["x", "y"], "label": 0, "template_id": "cause"},
            {"kind": "multiple_choice", "query_a": "a", "query_b": "b",
             "choices": ["m", "n"], "label": 1},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        got = load_dataset(str(path))
        assert len(got) == 3
        assert got[0].query == "good"
        assert got[1].template_id == "cause"
        assert got[2].query_b == "b"

    def test_missing_label_names_line(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(
            json.dumps({"kind": "classification", "query": "a", "label": 0})
            + "\n" + json.dumps({"kind": "classification", "query": "b"}) + "\n"
        )
        with pytest.raises(ParseError, match="2"):
            load_dataset(str(path))

    def test_bad_json_line(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"kind": "classification", "query": "a", "label": 0}\n{oops\n')
        with pytest.raises(ParseError, match="2"):
            load_dataset(str(path))

    def test_unknown_kind(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"kind": "regression", "query": "a", "label": 0}\n')
        with pytest.raises(ParseError, match="regression"):
            load_dataset(str(path))

    def test_choices_required_for_multiple_choice(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"kind": "multiple_choice", "query": "a", "label": 0}\n')
        with pytest.raises(ParseError):
            load_dataset(str(path))

    def test_label_out_of_choice_range(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(
            '{"kind": "multiple_choice", "query": "a", "choices": ["x"], "label": 3}\n'
        )
        with pytest.raises(ParseError):
            load_dataset(str(path))

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(
            '\n{"kind": "classification", "query": "a", "label": 0}\n\n'
        )
        assert len(load_dataset(str(path))) == 1
