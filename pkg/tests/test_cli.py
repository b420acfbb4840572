import json

import numpy as np

from _dgps import GRID, HORIZON, nontrivial_dgp, small_cohort, subject
from medgformula import write_cohort_csv
from medgformula.cli import main
from medgformula.report import format_point_ci

DGP_DOC = nontrivial_dgp().to_dict()


def write_config(path, **overrides):
    doc = {
        "input_csv": str(path.parent / "cohort.csv"),
        "n_visits": 3,
        "visit_times": list(GRID),
        "horizon": HORIZON,
        "contrast": {"percentiles": [25, 75]},
        "bootstrap": {"n_iterations": 12, "ci_level": 0.95, "n_threads": 1},
        "seed": 4242,
        "mode": "both",
        "output_json": str(path.parent / "results.json"),
        "output_table": str(path.parent / "table.txt"),
    }
    doc.update(overrides)
    path.write_text(json.dumps(doc))
    return doc


def simulate_fixture(tmp_path, n=300, seed=4242):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({
        "mode": "simulate",
        "seed": seed,
        "output_csv": str(tmp_path / "cohort.csv"),
        "output_json": str(tmp_path / "truth.json"),
        "contrast": {"percentiles": [25, 75]},
        "dgp": {**DGP_DOC, "n_subjects": n, "n_mc": 5000},
    }))
    assert main(["--config", str(cfg), "--quiet"]) == 0
    return tmp_path / "cohort.csv"


def load_results(tmp_path):
    return json.loads((tmp_path / "results.json").read_text())


def test_formatter_reproduces_reference_strings():
    assert format_point_ci(368.6, 72.1, 668.4, 1) == "368.6 (72.1, 668.4)"
    assert format_point_ci(-2.73, -2.99, -2.36, 2) == "-2.73 (-2.99, -2.36)"


def test_simulate_writes_byte_identical_csv(tmp_path):
    first = simulate_fixture(tmp_path).read_bytes()
    again = simulate_fixture(tmp_path).read_bytes()
    assert first == again
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert set(truth["true_effects"]["hazard_diff_per_100000_person_years"]) == {
        "DE", "IEM", "IED", "TE", "DE_plus_IEM"}


def test_simulate_rejects_zero_subjects(tmp_path):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({
        "mode": "simulate", "seed": 1,
        "output_csv": str(tmp_path / "cohort.csv"),
        "output_json": str(tmp_path / "truth.json"),
        "dgp": {**DGP_DOC, "n_subjects": 0},
    }))
    assert main(["--config", str(cfg), "--quiet"]) == 2


def test_run_round_trips_generated_cohort(tmp_path, capsys):
    simulate_fixture(tmp_path)
    cfg = tmp_path / "run.json"
    write_config(cfg, output_table="-")
    assert main(["--config", str(cfg)]) == 0
    table = capsys.readouterr().out
    assert "Direct effect" in table
    assert "Without competing risks" in table and "Accounting for competing risks" in table
    doc = load_results(tmp_path)
    assert set(doc["results"]) == {"competing_risks", "conditional_on_survival"}


def test_run_is_byte_deterministic_outside_metadata(tmp_path):
    simulate_fixture(tmp_path)
    cfg = tmp_path / "run.json"
    write_config(cfg)
    assert main(["--config", str(cfg), "--quiet"]) == 0
    first = load_results(tmp_path)
    first_table = (tmp_path / "table.txt").read_text()
    assert main(["--config", str(cfg), "--quiet"]) == 0
    second = load_results(tmp_path)
    second_table = (tmp_path / "table.txt").read_text()
    first.pop("metadata")
    second.pop("metadata")
    assert json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)
    assert first_table == second_table


def test_table_numbers_come_from_json(tmp_path):
    simulate_fixture(tmp_path)
    cfg = tmp_path / "run.json"
    write_config(cfg)
    assert main(["--config", str(cfg), "--quiet"]) == 0
    doc = load_results(tmp_path)
    table = (tmp_path / "table.txt").read_text()
    effects = doc["results"]["competing_risks"]["hazard_diff_per_100000_person_years"]
    te = effects["TE"]
    rendered = format_point_ci(te["point"], te["lower"], te["upper"], 1)
    total_line = next(line for line in table.splitlines()
                      if line.startswith("Total effect"))
    assert rendered in total_line
    # conditional block renders the death row as '-'
    death_line = next(line for line in table.splitlines()
                      if line.startswith("Indirect effect through the death process"))
    assert death_line.split()[-1] != ""
    cond = doc["results"]["conditional_on_survival"]["hazard_diff_per_100000_person_years"]
    assert "IED" not in cond


def test_seed_override_changes_results(tmp_path):
    simulate_fixture(tmp_path)
    cfg = tmp_path / "run.json"
    write_config(cfg)
    assert main(["--config", str(cfg), "--quiet"]) == 0
    base = load_results(tmp_path)
    assert main(["--config", str(cfg), "--quiet", "--seed", "999"]) == 0
    other = load_results(tmp_path)
    assert other["seed"] == 999
    assert (base["results"]["competing_risks"]["hazard_diff_per_100000_person_years"]["TE"]
            != other["results"]["competing_risks"]["hazard_diff_per_100000_person_years"]["TE"])


def test_mode_override_single_block(tmp_path, capsys):
    simulate_fixture(tmp_path)
    cfg = tmp_path / "run.json"
    write_config(cfg, output_table="-")
    assert main(["--config", str(cfg), "--mode", "competing_risks"]) == 0
    out = capsys.readouterr().out
    assert "Without competing risks" not in out
    doc = load_results(tmp_path)
    assert set(doc["results"]) == {"competing_risks"}


def test_thread_config_does_not_change_results(tmp_path):
    simulate_fixture(tmp_path)
    cfg = tmp_path / "run.json"
    write_config(cfg, bootstrap={"n_iterations": 12, "ci_level": 0.95, "n_threads": 1})
    assert main(["--config", str(cfg), "--quiet"]) == 0
    serial = load_results(tmp_path)
    write_config(cfg, bootstrap={"n_iterations": 12, "ci_level": 0.95, "n_threads": 4})
    assert main(["--config", str(cfg), "--quiet"]) == 0
    threaded = load_results(tmp_path)
    assert (serial["results"] == threaded["results"])


def test_dump_models(tmp_path):
    simulate_fixture(tmp_path)
    cfg = tmp_path / "run.json"
    write_config(cfg)
    models_path = tmp_path / "models.json"
    assert main(["--config", str(cfg), "--quiet", "--dump-models", str(models_path)]) == 0
    models = json.loads(models_path.read_text())
    assert len(models["mediator_models"]) == 3
    assert len(models["death_models"]) == 3
    assert "baseline_cumhaz" in models["outcome_model"]


def test_validation_failure_exits_2(tmp_path, capsys):
    bad = small_cohort([subject("a", 0.0, (0.0, 0.0), (1.0, 1.0, 1.0), (0, 1, 0),
                                5.0, "competing_death")])
    write_cohort_csv(bad, tmp_path / "cohort.csv")
    cfg = tmp_path / "run.json"
    write_config(cfg)
    assert main(["--config", str(cfg), "--quiet"]) == 2
    err = capsys.readouterr().err
    assert "NonAbsorbingDeath" in err


def test_fitting_failure_exits_3(tmp_path):
    # no outcome events anywhere: the outcome model cannot be fit
    rng = np.random.default_rng(1)
    subjects = [subject(f"s{i}", float(rng.normal()), tuple(rng.normal(size=2)),
                        tuple(rng.normal(size=3)), (0, 0, 0), 20.0, "censored")
                for i in range(40)]
    write_cohort_csv(small_cohort(subjects), tmp_path / "cohort.csv")
    cfg = tmp_path / "run.json"
    write_config(cfg)
    assert main(["--config", str(cfg), "--quiet"]) == 3


def test_bootstrap_budget_failure_exits_4(tmp_path):
    rng = np.random.default_rng(2)
    subjects = [subject(f"s{i}", float(rng.normal()), tuple(rng.normal(size=2)),
                        tuple(rng.normal(size=3)), (0, 0, 0), 20.0, "censored")
                for i in range(11)]
    subjects.append(subject("event", 0.5, (0.1, -0.2), (1.0, 1.1, 1.2),
                            (0, 0, 0), 9.0, "outcome"))
    write_cohort_csv(small_cohort(subjects), tmp_path / "cohort.csv")
    cfg = tmp_path / "run.json"
    write_config(cfg, bootstrap={"n_iterations": 40, "ci_level": 0.95, "n_threads": 1})
    assert main(["--config", str(cfg), "--quiet"]) == 4


def test_config_errors_exit_2(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"mode": "competing_risks"}))  # missing input_csv
    assert main(["--config", str(cfg), "--quiet"]) == 2
    cfg.write_text("not json at all")
    assert main(["--config", str(cfg), "--quiet"]) == 2
    missing = tmp_path / "nope.json"
    assert main(["--config", str(missing), "--quiet"]) == 2


def test_explicit_contrast_levels(tmp_path):
    simulate_fixture(tmp_path)
    cfg = tmp_path / "run.json"
    write_config(cfg, contrast={"levels": [-0.5, 0.5]})
    assert main(["--config", str(cfg), "--quiet"]) == 0
    doc = load_results(tmp_path)
    assert doc["contrast"] == {"a_ref": -0.5, "a_cmp": 0.5, "source": "explicit"}
