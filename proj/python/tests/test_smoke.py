import math

import pytest

import zrl_lab as z


def test_example_instance_and_prompt():
    inst = z.generate_instance(3, 3, seed=4)
    assert inst.difficulty == "d3p3"
    assert len(inst.edges) == 6
    assert inst.gold_path[0] == inst.source
    assert inst.gold_path[-1] == inst.destination
    prompt = z.render_prompt(inst)
    assert f"The source node is {inst.source}" in prompt
    assert z.score_text(inst, r"\boxed{" + inst.gold_text + "}") == 1
    assert z.score_text(inst, "no answer") == 0
    assert z.extract_answer(r"\boxed{ 1 , 2 }") == "1,2"


def test_mixture_counts():
    data = z.build_mixture("d2p2:0.5,d3p3:0.5", 20, seed=1)
    tags = [i.difficulty for i in data]
    assert tags.count("d2p2") == 10
    assert tags.count("d3p3") == 10
    with pytest.raises(z.ConfigError):
        z.build_mixture("d2p2:0.3", 10)


def test_estimators():
    assert z.group_advantages([1, 0, 0, 0, 0]) == pytest.approx([0.8, -0.2, -0.2, -0.2, -0.2])
    assert z.chunk_spans(10, 4) == [(0, 4), (4, 8), (8, 10)]
    assert z.vineppo_coefficients(3, 1, [0.1, 0.2, 0.5, 1.0]) == pytest.approx([0.1, 0.3, 0.5])
    assert z.progress_coefficients(3, 1, -0.2, 5.0, [0, 0.25, 0.25, 1.0]) == pytest.approx([1.05, -0.2, 3.55])
    w = z.bon_weights(0.8, 8)
    assert w["g_plus_raw"] == pytest.approx(2.01594, rel=1e-5)
    assert w["g_minus"] == 3.0
    assert z.kl_schedule(50, 0.1, 0.001, 100) == pytest.approx(math.sqrt(1e-4))


def test_policy_roundtrip(tmp_path):
    cfg = z.ModelConfig()
    cfg.label_max = 9
    cfg.width = 8
    cfg.heads = 2
    cfg.mlp_width = 16
    cfg.max_prompt_len = 20
    cfg.max_response_len = 6
    pol = z.Policy(cfg, seed=3)
    assert len(pol) == cfg.param_count
    inst = z.generate_instance(2, 2, seed=1, label_max=9)
    prompt = z.Vocab(2, 9).encode(inst)
    traj = pol.sample(prompt, temperature=1.0, top_p=1.0, max_len=6, seed=5)
    assert len(traj["response"]) <= 6
    assert all(lp <= 0 for lp in traj["logprobs"])
    value, grad = pol.logprob_grad(prompt, traj["response"], [1.0] * len(traj["response"]))
    assert value == pytest.approx(sum(traj["logprobs"]))
    assert len(grad) == len(pol)
    kl, kl_grad = pol.token_kl(pol, prompt, traj["response"])
    assert kl == pytest.approx(0.0, abs=1e-12)
    assert max(abs(g) for g in kl_grad) == 0.0

    path = tmp_path / "p.bin"
    pol.save(str(path))
    assert z.Policy.load(str(path)).values == pol.values


def test_gen_data_and_train(tmp_path):
    msg = z.gen_data("d2p2:1.0", 8, test_n=4, seed=2, out_dir=str(tmp_path / "data"))
    assert "d2p2=8" in msg
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "model.width = 8\nmodel.heads = 2\nmodel.mlp_width = 16\nmodel.max_prompt_len = 20\n"
        "train.group_size = 2\ntrain.batch_prompts = 2\ntrain.max_iterations = 1\ntrain.eval_interval = 1\n"
        f"data.train_file = {tmp_path / 'data' / 'train.jsonl'}\ndata.test_file = {tmp_path / 'data' / 'test.jsonl'}\n"
    )
    z.train(config=str(cfg), out_dir=str(tmp_path / "out"))
    records, warnings = z.read_metrics(tmp_path / "out" / "metrics.jsonl")
    assert warnings == []
    assert [r["iteration"] for r in records] == [0, 1]
    assert "d2p2" in records[-1]["success"]
    with pytest.raises(z.ConfigError):
        z.train(config=str(cfg), overrides=["train.bogus=1"], out_dir=str(tmp_path / "bad"))
