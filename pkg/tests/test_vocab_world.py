import numpy as np
import pytest

from ccd.vocab import Vocabulary, build_toy_vocabulary, symptom_names
from ccd.world import LatentCase, WorldParams, reference_report, sample_case


class TestVocabulary:
    def test_toy_vocab_shape(self):
        vocab, token_map = build_toy_vocabulary(14)
        assert vocab.eos_id == 0
        assert vocab.tokens[0] == "<eos>"
        assert len(token_map) == 14
        for name, ids in token_map.items():
            assert len(ids) == 1 and vocab.tokens[ids[0]] == name

    def test_encode_detokenize_round_trip(self):
        vocab, _ = build_toy_vocabulary(14)
        text = "Findings: Edema. no acute findings."
        assert vocab.detokenize(vocab.encode(text)) == text

    def test_anchor_prompt_encodable(self):
        vocab, _ = build_toy_vocabulary(14)
        ids = vocab.encode("Attention to the following clinical instructions: Edema, Opacity")
        assert vocab.detokenize(ids).startswith("Attention to the following")

    def test_unknown_word_raises(self):
        vocab, _ = build_toy_vocabulary(14)
        with pytest.raises(KeyError):
            vocab.encode("Findings: Zebra.")

    def test_synthesized_names_beyond_builtin(self):
        names = symptom_names(16)
        assert names[14] == "Finding15" and names[15] == "Finding16"
        vocab, token_map = build_toy_vocabulary(16)
        assert "Finding16" in token_map

    def test_duplicate_tokens_rejected(self):
        with pytest.raises(ValueError):
            Vocabulary(tokens=("a", "a"), eos_id=0)


class TestSampleCase:
    def test_prevalence_zero_and_one(self):
        rng = np.random.default_rng(0)
        none = sample_case(WorldParams(prevalence=0.0, distractor_rate=0.0), rng)
        assert not any(none.truth)
        rng = np.random.default_rng(0)
        full = sample_case(WorldParams(prevalence=1.0, distractor_rate=0.0), rng)
        assert all(full.truth)

    def test_fixed_seed_reproducible(self):
        params = WorldParams()
        a = sample_case(params, np.random.default_rng(42))
        b = sample_case(params, np.random.default_rng(42))
        assert a == b

    def test_severity_bands(self):
        params = WorldParams(prevalence=0.5)
        rng = np.random.default_rng(1)
        for _ in range(200):
            case = sample_case(params, rng)
            for present, sev in zip(case.truth, case.severity):
                if present:
                    assert 0.5 < sev <= 1.0
                else:
                    assert 0.0 < sev <= 0.5

    def test_prevalence_monte_carlo(self):
        params = WorldParams(n_symptoms=4, prevalence=(0.1, 0.3, 0.5, 0.9),
                             distractor_rate=0.0)
        rng = np.random.default_rng(2)
        counts = np.zeros(4)
        n = 10_000
        for _ in range(n):
            counts += sample_case(params, rng).truth
        np.testing.assert_allclose(counts / n, (0.1, 0.3, 0.5, 0.9), atol=0.02)

    def test_distractor_names_an_absent_symptom(self):
        params = WorldParams(prevalence=0.5, distractor_rate=1.0)
        vocab, _ = build_toy_vocabulary(14)
        rng = np.random.default_rng(3)
        seen = 0
        for _ in range(100):
            case = sample_case(params, rng, vocab)
            if case.distractor is not None:
                seen += 1
                assert not case.truth[case.distractor]
                assert "History :" in vocab.detokenize(case.prompt).replace("History:", "History :") or \
                    "History" in vocab.detokenize(case.prompt)
        assert seen > 50

    def test_distractor_rate_zero(self):
        params = WorldParams(distractor_rate=0.0)
        rng = np.random.default_rng(4)
        for _ in range(50):
            assert sample_case(params, rng).distractor is None


class TestReferenceReport:
    def _case(self, truth, n=14):
        sev = tuple(0.75 if t else 0.25 for t in truth)
        vocab, _ = build_toy_vocabulary(n)
        return LatentCase(truth=tuple(truth), severity=sev,
                          prompt=tuple(vocab.encode("Generate a findings report :")))

    def test_single_symptom(self):
        truth = [False] * 14
        truth[3] = True  # Edema
        assert reference_report(self._case(truth)) == "Findings: Edema."

    def test_empty_truth(self):
        assert reference_report(self._case([False] * 14)) == "Findings: no acute findings."

    def test_ontology_order(self):
        truth = [False] * 14
        truth[11] = True  # Opacity
        truth[0] = True   # Atelectasis
        assert reference_report(self._case(truth)) == "Findings: Atelectasis. Opacity."

    def test_mentions_iff_truth(self):
        rng = np.random.default_rng(5)
        names = symptom_names(14)
        for _ in range(100):
            case = sample_case(WorldParams(prevalence=0.4, distractor_rate=0.0), rng)
            text = reference_report(case)
            for name, present in zip(names, case.truth):
                assert (name in text) == present


class TestCaseExport:
    def test_round_trip(self, tmp_path):
        from ccd.world import load_cases, save_cases

        rng = np.random.default_rng(6)
        params = WorldParams(distractor_rate=0.5)
        cases = [sample_case(params, rng) for _ in range(20)]
        path = tmp_path / "cases.jsonl"
        save_cases(cases, path)
        assert load_cases(path) == cases


class TestWorldParamsValidation:
    def test_bad_prevalence(self):
        with pytest.raises(ValueError):
            WorldParams(prevalence=1.5)

    def test_bad_rates(self):
        with pytest.raises(ValueError):
            WorldParams(fn_bias=-0.1)
        with pytest.raises(ValueError):
            WorldParams(distractor_rate=2.0)

    def test_severity_consistency_enforced(self):
        with pytest.raises(ValueError):
            LatentCase(truth=(True,), severity=(0.4,), prompt=())
