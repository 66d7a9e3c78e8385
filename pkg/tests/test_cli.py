"""Command-line interface: exit codes, output formats, determinism.

Every command runs in-process through main(argv, out) against a
temporary catalog, so the tests see exactly what a shell user sees
without spawning interpreters.
"""

import io
import json

import pytest

from symquad import domains as dm
from symquad.cli import main
from symquad.errors import (EXIT_CERTIFICATION, EXIT_ERROR, EXIT_MISSING,
                            EXIT_OK, EXIT_USAGE)
from symquad.ruleio import Catalog


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


@pytest.fixture()
def root(tmp_path):
    return str(tmp_path / "rules")


# ---------------------------------------------------------------------------
# generate


def test_generate_square(root):
    code, out = run("generate", "square", "5", "--catalog", root)
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0] == "domain square"
    assert lines[1] == "degree 5"
    assert lines[2] == "nodes 8"
    assert lines[3].startswith("residual ")
    assert any(l.startswith("orbits S") for l in lines)
    assert lines[-1] == "catalog stored square/q5.rule"
    cat = Catalog(root)
    assert cat.node_count(dm.SQUARE, 5) == 8


def test_generate_is_byte_deterministic(tmp_path):
    outs, rules, manifests, traces = [], [], [], []
    for tag in ("a", "b"):
        root = tmp_path / tag
        trace = tmp_path / ("trace-%s.txt" % tag)
        code, out = run("generate", "square", "5",
                        "--catalog", str(root), "--trace", str(trace))
        assert code == EXIT_OK
        outs.append(out)
        rules.append((root / "square" / "q5.rule").read_bytes())
        manifests.append((root / "manifest.json").read_bytes())
        traces.append(trace.read_bytes())
    assert outs[0] == outs[1]
    assert rules[0] == rules[1]
    assert manifests[0] == manifests[1]
    assert traces[0] == traces[1]


def test_generate_keeps_existing_smaller_rule(root):
    code, _ = run("generate", "square", "5", "--catalog", root)
    assert code == EXIT_OK
    code, out = run("generate", "square", "5", "--catalog", root)
    assert code == EXIT_OK
    assert "catalog kept existing 8-node rule" in out


def test_generate_degree_range_skips_even_tensor_degrees(root):
    code, out = run("generate", "square", "1:5", "--catalog", root)
    assert code == EXIT_OK
    blocks = out.strip().split("\n\n")
    assert [b.splitlines()[1] for b in blocks] == \
        ["degree 1", "degree 3", "degree 5"]
    assert Catalog(root).degrees(dm.SQUARE) == [1, 3, 5]


@pytest.mark.parametrize("argv", [
    ("generate", "square", "4"),
    ("generate", "cube", "2"),
    ("generate", "square", "4:4"),
    ("generate", "square", "0"),
    ("generate", "square", "5:3"),
    ("generate", "square", "x"),
    ("generate", "square", "1:2:3"),
])
def test_generate_usage_errors(argv, root):
    code, _ = run(*argv, "--catalog", root)
    assert code == EXIT_USAGE


def test_generate_unknown_domain_is_an_argparse_error(root):
    with pytest.raises(SystemExit) as err:
        run("generate", "hexagon", "3", "--catalog", root)
    assert err.value.code == 2


def test_generate_plan_override_validation(root):
    code, _ = run("generate", "square", "3", "--catalog", root,
                  "--bundles", "S3;S2;S1")
    assert code == EXIT_USAGE    # priorities missing
    code, _ = run("generate", "square", "3", "--catalog", root,
                  "--bundles", "S9", "--priorities", "1")
    assert code == EXIT_USAGE    # unknown class
    code, _ = run("generate", "square", "3", "--catalog", root,
                  "--bundles", "S3,S2;S1", "--priorities", "1;1")
    assert code == EXIT_USAGE    # shape mismatch
    code, out = run("generate", "square", "3", "--catalog", root,
                    "--bundles", "S4;S3,S2;S1",
                    "--priorities", "1;1e5,1;1",
                    "--collapse-threshold", "0.25")
    assert code == EXIT_OK
    assert "nodes 4" in out


# ---------------------------------------------------------------------------
# verify


def test_verify_stored_rule(root):
    run("generate", "square", "5", "--catalog", root)
    code, out = run("verify", "square", "5", "--catalog", root)
    assert code == EXIT_OK
    lines = out.splitlines()
    assert "nodes 8" in lines
    for flag in ("residual-ok", "positive", "interior", "symmetric"):
        assert ("%s true" % flag) in lines
    assert lines[-1] == "result pass"


def test_verify_falls_back_to_packaged_rules(root):
    code, out = run("verify", "pyramid", "5", "--catalog", root)
    assert code == EXIT_OK
    assert "result pass" in out


def test_verify_at_higher_check_degree_fails(root):
    code, out = run("verify", "square", "5", "--catalog", root,
                    "--check-degree", "7")
    assert code == EXIT_CERTIFICATION
    lines = out.splitlines()
    assert "check-degree 7" in lines
    assert "residual-ok false" in lines
    assert "positive true" in lines
    assert lines[-1] == "result fail"


def test_verify_missing_rule(root):
    code, _ = run("verify", "square", "99", "--catalog", root)
    assert code == EXIT_MISSING


def test_verify_rule_file(root, tmp_path):
    run("generate", "square", "3", "--catalog", root)
    path = tmp_path / "rules" / "square" / "q3.rule"
    code, out = run("verify", "square", "3", "--file", str(path),
                    "--catalog", root)
    assert code == EXIT_OK and "result pass" in out
    bad = tmp_path / "bad.rule"
    bad.write_text(path.read_text().replace("format 1", "format one"))
    code, _ = run("verify", "square", "3", "--file", str(bad),
                  "--catalog", root)
    assert code == EXIT_ERROR


# ---------------------------------------------------------------------------
# convergence


def test_convergence_square(root, capsys):
    code, out = run("convergence", "square", "5", "--catalog", root,
                    "-k", "30,30", "--levels", "4")
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0] == "level,error,rate,floored"
    assert len(lines) == 6            # levels 0..4
    err = capsys.readouterr().err
    assert "asymptotic rate" in err and "target >= 6" in err


def test_convergence_usage_errors(root):
    code, _ = run("convergence", "square", "5", "--catalog", root,
                  "-k", "30", "--levels", "3")
    assert code == EXIT_USAGE         # wrong wavevector length
    code, _ = run("convergence", "square", "5", "--catalog", root,
                  "-k", "0,1", "--levels", "3")
    assert code == EXIT_USAGE         # nonpositive wavenumber
    code, _ = run("convergence", "square", "5", "--catalog", root,
                  "-k", "a,b", "--levels", "3")
    assert code == EXIT_USAGE
    code, _ = run("convergence", "square", "5", "--catalog", root,
                  "-k", "2,2", "--levels", "0")
    assert code == EXIT_USAGE
    code, _ = run("convergence", "triangle", "5", "--catalog", root,
                  "-k", "2,2", "--levels", "3")
    assert code == EXIT_USAGE         # simplices tile no box


def test_convergence_even_pyramid_notes_bonus_order(root, capsys):
    code, _ = run("convergence", "pyramid", "2", "--catalog", root,
                  "-k", "2,2,2", "--levels", "3")
    assert code == EXIT_OK
    assert "expect about 4" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# efficiency


def test_efficiency_square_rows(root):
    code, out = run("efficiency", "square", "--catalog", root)
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0] == "q,n,n_r,e"
    assert "5,8,9,0.111111" in lines
    assert "1,1,1,0.000000" in lines


def test_efficiency_degree_restriction(root):
    code, out = run("efficiency", "square", "5", "--catalog", root)
    assert code == EXIT_OK
    assert out.splitlines() == ["q,n,n_r,e", "5,8,9,0.111111"]


def test_efficiency_covers_ingredient_backed_domains(root):
    for kind in ("prism", "pyramid"):
        code, out = run("efficiency", kind, "1:5", "--catalog", root)
        assert code == EXIT_OK
        assert len(out.splitlines()) == 6


def test_efficiency_usage_and_missing(root):
    code, _ = run("efficiency", "triangle", "--catalog", root)
    assert code == EXIT_USAGE
    code, _ = run("efficiency", "square", "98:99", "--catalog", root)
    assert code == EXIT_MISSING


# ---------------------------------------------------------------------------
# catalog root resolution


def test_catalog_env_var_and_flag_priority(tmp_path, monkeypatch):
    env_root = tmp_path / "env-rules"
    monkeypatch.setenv("SYMQUAD_CATALOG", str(env_root))
    code, _ = run("generate", "square", "1")
    assert code == EXIT_OK
    assert (env_root / "square" / "q1.rule").exists()

    flag_root = tmp_path / "flag-rules"
    code, _ = run("generate", "square", "1", "--catalog", str(flag_root))
    assert code == EXIT_OK
    assert (flag_root / "square" / "q1.rule").exists()


def test_default_catalog_is_cwd_relative(tmp_path, monkeypatch):
    monkeypatch.delenv("SYMQUAD_CATALOG", raising=False)
    monkeypatch.chdir(tmp_path)
    code, _ = run("generate", "square", "1")
    assert code == EXIT_OK
    manifest = tmp_path / "symquad-rules" / "manifest.json"
    assert json.loads(manifest.read_text())["files"]
