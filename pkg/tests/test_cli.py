"""CLI behavior: exit codes, artifacts on disk, determinism, config layering."""

import dataclasses
import json
import re

import pytest

from orliczsmooth.cli import (
    CLIError,
    RunConfig,
    VerifyContext,
    _parse_n_range,
    build_config,
    cmd_converge,
    load_config_file,
    main,
    make_parser,
)


def run_cli(*argv: str) -> int:
    return main(list(argv))


class TestConfigResolution:
    def test_n_range_forms(self):
        assert _parse_n_range("3..5") == (3, 5)
        assert _parse_n_range(" 4 ") == (4, 4)
        with pytest.raises(CLIError):
            _parse_n_range("3..x")
        with pytest.raises(CLIError):
            _parse_n_range("lots")

    def test_config_file_parsing(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "# comment line\n"
            "domain = comb\n"
            "lmax = 7   # trailing comment\n"
            "max-chain = 8\n"
            "\n")
        assert load_config_file(str(cfg)) == {
            "domain": "comb", "lmax": "7", "max_chain": "8"}

    def test_config_file_unknown_key(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("depth = 9\n")
        with pytest.raises(CLIError, match="unknown config key 'depth'"):
            load_config_file(str(cfg))

    def test_config_file_not_key_value(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("just words\n")
        with pytest.raises(CLIError, match="expected key=value"):
            load_config_file(str(cfg))

    def test_config_file_missing(self, tmp_path):
        with pytest.raises(CLIError, match="cannot read config file"):
            load_config_file(str(tmp_path / "absent.cfg"))

    def test_flag_beats_config_beats_default(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("lmax = 5\nseed = 3\n")
        args = make_parser().parse_args(
            ["decompose", "--config", str(cfg_file), "--lmax", "7"])
        cfg = build_config(args)
        assert cfg.lmax == 7          # flag wins
        assert cfg.seed == 3          # file beats default
        assert cfg.domain == "square" # default survives

    def test_validate_rejects_bad_values(self):
        with pytest.raises(CLIError, match="k must be"):
            RunConfig(k=0).validate()
        with pytest.raises(CLIError, match="lmax must be"):
            RunConfig(lmax=2).validate()
        with pytest.raises(CLIError, match="quad must be"):
            RunConfig(quad_order=0).validate()
        RunConfig().validate(need_n=True)
        with pytest.raises(CLIError, match="empty scale range"):
            RunConfig(n_lo=5, n_hi=3).validate(need_n=True)

    def test_scale_range_needs_headroom(self):
        # two decomposition levels must remain below the finest scale
        with pytest.raises(CLIError, match="headroom"):
            RunConfig(n_lo=3, n_hi=5, lmax=6).validate(need_n=True)
        RunConfig(n_lo=3, n_hi=5, lmax=7).validate(need_n=True)


class TestDecompose:
    def test_square_json_and_svg_agree(self, tmp_path, capsys):
        rc = run_cli("decompose", "--domain", "square", "--lmax", "5",
                     "--out", str(tmp_path), "--svg", "squares.svg")
        assert rc == 0
        payload = json.loads((tmp_path / "decomposition.json").read_text())
        assert payload["domain"] == "square"
        assert payload["scale"] == {"factor": 1.0, "offset": [0.0, 0.0]}
        n_json = len(payload["squares"])
        assert n_json == payload["invariants"]["num_squares"]
        svg = (tmp_path / "squares.svg").read_text()
        assert svg.count("<rect ") == n_json
        assert "<polygon " in svg  # domain outline on top
        out = capsys.readouterr().out
        assert f"{n_json} squares" in out
        # atomic writes leave no temp files behind
        assert not list(tmp_path.glob(".tmp-*"))

    def test_domain_json_without_vertices_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "dom.json"
        bad.write_text(json.dumps({"name": "triangle"}))
        rc = run_cli("decompose", "--domain", str(bad), "--out", str(tmp_path))
        assert rc == 1
        assert "vertices" in capsys.readouterr().err

    def test_unparsable_domain_file_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "dom.json"
        bad.write_text("{not json")
        rc = run_cli("decompose", "--domain", str(bad), "--out", str(tmp_path))
        assert rc == 1
        assert "not valid JSON" in capsys.readouterr().err

    def test_missing_domain_file_exits_1(self, tmp_path, capsys):
        rc = run_cli("decompose", "--domain", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path))
        assert rc == 1
        assert "cannot read domain file" in capsys.readouterr().err

    def test_oversized_domain_records_transform(self, tmp_path):
        dom = tmp_path / "big.json"
        dom.write_text(json.dumps(
            {"vertices": [[0, 0], [2, 0], [2, 2], [0, 2]]}))
        rc = run_cli("decompose", "--domain", str(dom), "--lmax", "4",
                     "--out", str(tmp_path))
        assert rc == 0
        payload = json.loads((tmp_path / "decomposition.json").read_text())
        # normalization maps to diameter 1/2, so factor = 1/(2 * 2*sqrt(2))
        assert payload["scale"]["factor"] == pytest.approx(1.0 / (4 * 2**0.5))
        factor, (ox, oy) = payload["scale"]["factor"], payload["scale"]["offset"]
        assert factor * 1.0 + ox == pytest.approx(0.5)  # original center -> 1/2

    def test_output_dir_is_created(self, tmp_path):
        out = tmp_path / "deep" / "nested"
        rc = run_cli("decompose", "--domain", "square", "--lmax", "4",
                     "--out", str(out))
        assert rc == 0
        assert (out / "decomposition.json").exists()

    def test_json_is_deterministic(self, tmp_path):
        texts = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            assert run_cli("decompose", "--domain", "lshape", "--lmax", "5",
                           "--out", str(out)) == 0
            texts.append((out / "decomposition.json").read_bytes())
        assert texts[0] == texts[1]


class TestLayers:
    def test_comb_layers_artifact(self, tmp_path, capsys):
        rc = run_cli("layers", "--domain", "comb", "--n", "4", "--lmax", "7",
                     "--out", str(tmp_path), "--svg", "layers.svg")
        assert rc == 0
        payload = json.loads((tmp_path / "layers.json").read_text())
        assert payload["n"] == 4
        assert payload["pieces"] and payload["core"]
        assert len(payload["chains"]) > 0
        out = capsys.readouterr().out
        assert "boundary pieces" in out and "collar coverage" in out
        svg = (tmp_path / "layers.svg").read_text()
        assert svg.count("<circle ") == len(payload["pieces"])  # one anchor dot each

    def test_scale_beyond_depth_exits_1(self, tmp_path, capsys):
        rc = run_cli("layers", "--domain", "square", "--n", "9", "--lmax", "6",
                     "--out", str(tmp_path))
        assert rc == 1
        assert "scale range" in capsys.readouterr().err


class TestConverge:
    def test_polynomial_field_is_reproduced(self, tmp_path, capsys):
        # degree < k, so the approximant matches to quadrature accuracy
        rc = run_cli("converge", "--domain", "square", "--field",
                     "poly:coeffs=0.5,1;2,0", "--psi", "power:p=1.5",
                     "--k", "2", "--n", "3..4", "--lmax", "7", "--quad", "4",
                     "--out", str(tmp_path))
        assert rc == 0
        csv_text = (tmp_path / "convergence.csv").read_text()
        lines = csv_text.strip().splitlines()
        assert lines[0].startswith("n,")
        assert len(lines) == 3
        out = capsys.readouterr().out
        assert "n=3:" in out and "n=4:" in out

    def test_csv_is_deterministic(self, tmp_path):
        texts = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            assert run_cli("converge", "--domain", "square", "--field",
                           "trig:fx=1", "--k", "1", "--n", "3", "--lmax", "5",
                           "--quad", "4", "--out", str(out)) == 0
            texts.append((out / "convergence.csv").read_bytes())
        assert texts[0] == texts[1]

    def test_range_without_headroom_exits_1(self, tmp_path, capsys):
        rc = run_cli("converge", "--domain", "square", "--n", "3..5",
                     "--lmax", "6", "--out", str(tmp_path))
        assert rc == 1
        assert "headroom" in capsys.readouterr().err

    def test_bad_field_spec_exits_1(self, tmp_path, capsys):
        rc = run_cli("converge", "--domain", "square", "--field", "mystery:a=1",
                     "--n", "3", "--lmax", "5", "--out", str(tmp_path))
        assert rc == 1
        assert "unknown field family" in capsys.readouterr().err

    def test_failed_scale_exits_3(self, tmp_path, capsys):
        # a chain bound of 1 is unsatisfiable, so every scale rows up as failed
        cfg = dataclasses.replace(
            RunConfig(domain="square", n_lo=3, n_hi=3, lmax=5, quad_order=4,
                      out=str(tmp_path)),
            max_chain_len=1)
        rc = cmd_converge(cfg)
        assert rc == 3
        assert "exceeds bound 1" in capsys.readouterr().out
        csv_text = (tmp_path / "convergence.csv").read_text()
        assert "3,nan,nan,nan" in csv_text  # marker row for the failed scale


class TestVerify:
    def test_unknown_suite_exits_1(self, tmp_path, capsys):
        rc = run_cli("verify", "--suite", "nonsense", "--out", str(tmp_path))
        assert rc == 1
        assert "unknown suite" in capsys.readouterr().err

    def test_single_suite_passes_and_reports(self, tmp_path, capsys):
        rc = run_cli("verify", "--suite", "projection", "--out", str(tmp_path))
        assert rc == 0
        out = capsys.readouterr().out
        lines = out.strip().splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("projection") and " PASS " in lines[0]
        assert lines[1] == "suite mask 0b00000000 (all passed)"
        assert (tmp_path / "verify.txt").read_text() == out

    def test_report_is_deterministic_for_fixed_seed(self, tmp_path):
        texts = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            assert run_cli("verify", "--suite", "jensen", "--seed", "7",
                           "--out", str(out)) == 0
            texts.append((out / "verify.txt").read_bytes())
        assert texts[0] == texts[1]

    def test_doubling_suite_reports_constants(self, tmp_path, capsys):
        rc = run_cli("verify", "--suite", "doubling", "--out", str(tmp_path))
        assert rc == 0
        line = capsys.readouterr().out.splitlines()[0]
        assert re.search(r"C\s*=|C's|constant", line) or "2.82843" in line

    def test_chain_population_is_valid_and_capped(self):
        ctx = VerifyContext(RunConfig())
        chains = ctx.chain_population(4)
        assert len(chains) > 20
        for chain in chains:
            chain.validate()
            assert chain.length <= 10
        # the population is cached, not rebuilt
        assert ctx.chain_population(4) is chains
