import json

import numpy as np
import pytest

from compx import container
from compx.cli import main
from compx.imaging import ImageBuffer, load_image, save_image
from compx.testimages import synthetic_image


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    save_image(synthetic_image(0, 64, 64), tmp_path / "img.png")
    return tmp_path


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as err:
        main(["codec"])  # missing subcommand
    assert err.value.code == 2


def test_unknown_subcommand_exit_code():
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 2


def test_codec_encode_decode_extract(workdir, capsys):
    mask = np.zeros((64, 64, 1), dtype=np.uint8)
    mask[:, 32:] = 255
    save_image(ImageBuffer.from_array(mask), workdir / "mask.pgm")

    assert main(["codec", "encode", "-i", "img.png", "-o", "out.ssbx",
                 "--q", "0.6", "--mask", "mask.pgm"]) == 0
    data = (workdir / "out.ssbx").read_bytes()
    parsed = container.parse(data)
    assert [e.group_id for e in parsed.header.group_table] == [0, 1]

    assert main(["codec", "extract", "-s", "out.ssbx", "--groups", "1",
                 "-o", "sub.ssbx"]) == 0
    sub = container.parse((workdir / "sub.ssbx").read_bytes())
    assert [e.group_id for e in sub.header.group_table] == [1]
    assert len((workdir / "sub.ssbx").read_bytes()) < len(data)

    assert main(["codec", "decode", "-s", "sub.ssbx", "-o", "recon.png",
                 "--groups", "1"]) == 0
    recon = load_image(workdir / "recon.png")
    assert np.all(recon.data[:, :32, :] == 128)  # omitted group is gray


def test_codec_decode_unknown_group(workdir, capsys):
    assert main(["codec", "encode", "-i", "img.png", "-o", "out.ssbx"]) == 0
    code = main(["codec", "decode", "-s", "out.ssbx", "-o", "x.png",
                 "--groups", "7"])
    assert code == 1
    assert "UnknownGroup" in capsys.readouterr().err


def test_metrics_psnr_identical(workdir, capsys):
    assert main(["metrics", "psnr", "-a", "img.png", "-b", "img.png"]) == 0
    assert capsys.readouterr().out.strip() == "inf"


def test_metrics_wpsnr_beta_derived(workdir, capsys):
    mask = np.zeros((64, 64, 1), dtype=np.uint8)
    mask[:32] = 255
    save_image(ImageBuffer.from_array(mask), workdir / "roi.pgm")
    save_image(synthetic_image(1, 64, 64), workdir / "other.png")
    assert main(["metrics", "wpsnr", "-a", "img.png", "-b", "other.png",
                 "--mask", "roi.pgm", "--alpha", "0.8", "--json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert "wpsnr" in out and out["wpsnr"] != "inf"


def test_metrics_bpp_from_stream_header(workdir, capsys):
    main(["codec", "encode", "-i", "img.png", "-o", "out.ssbx", "--q", "0.3"])
    capsys.readouterr()  # drain the encode line
    assert main(["metrics", "bpp", "-s", "out.ssbx"]) == 0
    value = float(capsys.readouterr().out.strip())
    expected = 8 * len((workdir / "out.ssbx").read_bytes()) / (64 * 64)
    assert value == pytest.approx(expected, abs=1e-6)


def test_metrics_bd_identical_curves(workdir, capsys):
    rows = "bpp,psnr\n0.1,30\n0.2,31\n0.4,33\n0.8,36\n"
    (workdir / "a.csv").write_text(rows)
    (workdir / "b.csv").write_text(rows)
    assert main(["metrics", "bd", "--ref", "a.csv", "--test", "b.csv"]) == 0
    assert capsys.readouterr().out.strip() == "0.00"


def test_bench_run_markdown(workdir, capsys):
    assert main(["bench", "run", "--planner", "rules", "--repeats", "1"]) == 0
    out = capsys.readouterr().out
    assert "| Simple (%) | Hard (%) | All (%) |" in out


def test_bench_sweep_csv(workdir, capsys):
    assert main(["bench", "sweep", "--images", "img.png",
                 "--grid", "0.2,0.4,0.6,0.8"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "image,q,bpp,psnr"
    assert len(lines) == 5


def test_prompts_validate(workdir, capsys):
    assert main(["prompts", "validate"]) == 0
    assert "prompt store OK: 6 transcripts" in capsys.readouterr().out


def test_compress_rules_session(workdir, capsys):
    code = main(["compress", "-i", "img.png",
                 "-m", "Compress img.png. Target a size of about 4000 Bytes.",
                 "--planner", "rules", "--out", "sess", "--json"])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["outcome"] == "accepted"
    assert len(doc["iterations"]) <= 10
    chosen = doc["iterations"][doc["chosen_iteration"]]
    assert 4000 - 256 <= chosen["bytes"] <= 4000
    assert (workdir / "sess" / "trace.json").is_file()


def test_compress_fixture_replay(workdir, capsys):
    code = main(["compress", "-i", "img.png", "-m", "ignored",
                 "--transport", "fixture:appendix_d", "--out", "replay", "--json"])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["outcome"] == "accepted"
    assert doc["chosen_iteration"] == 5


def test_serve_wires_uvicorn(workdir, monkeypatch):
    calls = {}

    def fake_run(app, host, port):
        calls["host"] = host
        calls["port"] = port
        calls["routes"] = {r.path for r in app.routes}

    import uvicorn

    monkeypatch.setattr(uvicorn, "run", fake_run)
    assert main(["serve", "--host", "0.0.0.0", "--port", "9311",
                 "--root", str(workdir / "srv")]) == 0
    assert calls["host"] == "0.0.0.0"
    assert calls["port"] == 9311
    assert "/sessions" in calls["routes"]


def test_config_file_loaded(workdir):
    (workdir / "compx.toml").write_text(
        '[chat]\nbase_url = "http://localhost:9"\nmodel = "tiny"\n')
    from compx.cli import chat_config_from, load_config

    config = chat_config_from(load_config())
    assert config.base_url == "http://localhost:9"
    assert config.model == "tiny"
