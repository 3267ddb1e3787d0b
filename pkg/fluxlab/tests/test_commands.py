import json
import math
import os
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from fluxlab import cli
from fluxlab.exceptions import EigensolverError, SchemaError
from fluxlab.export import config_digest, read_results, write_results
from fluxlab.models import KerrParams
from fluxlab.serializers import DICKE_COLUMNS, KERR_COLUMNS, RunConfigSerializer, expand_grid

LAMBDA_C = 0.5 * math.sqrt(0.5 * 1.0001)


def kerr_row(N, eps, Pi_u, Pi_d, gap=0.1, model="kerr"):
    row = dict.fromkeys(KERR_COLUMNS, 0.0)
    row.update(model=model, N=N, eps=eps, Pi_u=Pi_u, Pi_d=Pi_d, Phi_q=Pi_u + Pi_d, gap=gap, n_max_used=40)
    return row


def dicke_row(lam, Pi_d):
    row = dict.fromkeys(DICKE_COLUMNS, 0.0)
    row.update(model="dicke", N=1, n_max_used=0, Pi_d=Pi_d, Phi_q=Pi_d, Pi_u=0.0, S=2.0)
    row["lambda"] = lam
    return row


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def write_config(self, name, config):
        path = self.root / name
        path.write_text(json.dumps(config, indent=2), encoding="utf-8")
        return str(path)

    def call(self, *args, **options):
        out, err = StringIO(), StringIO()
        call_command(*args, stdout=out, stderr=err, **options)
        return out.getvalue(), err.getvalue()


class RunCommandTests(CommandTestCase):
    def cavity_config(self, **overrides):
        config = {
            "schema_version": 1,
            "model": "cavity",
            "params": {"E": 1.0, "kappa": 0.5},
            "output": str(self.root / "cavity.csv"),
        }
        config.update(overrides)
        return config

    def dicke_config(self):
        return {
            "model": "dicke",
            "params": {"omega0": 0.005, "omega": 0.01, "kappa": 1.0, "gamma": 1e-5},
            "sweep": {"lambda_grid": {"min": 0.9, "max": 1.1, "count": 11, "relative": True}},
            "output": str(self.root / "dicke.csv"),
        }

    def test_cavity_run(self):
        path = self.write_config("cavity.json", self.cavity_config())
        out, _ = self.call("run", path)
        self.assertIn("Wrote 1 cavity rows", out)
        metadata, frame = read_results(self.root / "cavity.csv")
        self.assertEqual(metadata["model"], "cavity")
        self.assertEqual(metadata["config_sha256"], config_digest(self.cavity_config()))
        self.assertEqual(list(frame.columns), list(KERR_COLUMNS))
        self.assertAlmostEqual(frame.loc[0, "Pi_ext"], 4.0, delta=4e-4)
        self.assertEqual(frame.loc[0, "wall_time_s"], 0.0)
        self.assertFalse((self.root / "cavity.csv.partial").exists())

    def test_dicke_run_is_deterministic(self):
        path = self.write_config("dicke.json", self.dicke_config())
        output = self.root / "dicke.csv"
        self.call("run", path, threads=1)
        first = output.read_bytes()
        self.call("run", path, threads=3)
        self.assertEqual(output.read_bytes(), first)

        metadata, frame = read_results(output, model="dicke")
        self.assertAlmostEqual(float(metadata["lambda_c"]), LAMBDA_C, places=14)
        self.assertEqual(len(frame), 11)
        self.assertTrue(frame["lambda"].is_monotonic_increasing)

    def test_malformed_json_reports_position(self):
        path = self.root / "broken.json"
        path.write_text('{\n  "model": "kerr",\n  "params": {oops}\n}\n', encoding="utf-8")
        with self.assertRaises(CommandError) as caught:
            self.call("run", str(path))
        self.assertEqual(caught.exception.returncode, 2)
        self.assertIn("broken.json:3:", str(caught.exception))

    def test_unknown_key_is_rejected(self):
        path = self.write_config("extra.json", self.cavity_config(colour="blue"))
        with self.assertRaises(CommandError) as caught:
            self.call("run", path)
        self.assertEqual(caught.exception.returncode, 2)
        self.assertIn("colour", str(caught.exception))

    def test_kerr_needs_a_drive_grid(self):
        config = {"model": "kerr", "params": {"delta": -2.0, "u": 1.0, "kappa": 0.5},
                  "output": str(self.root / "kerr.csv")}
        with self.assertRaises(CommandError) as caught:
            self.call("run", self.write_config("kerr.json", config))
        self.assertEqual(caught.exception.returncode, 2)
        self.assertIn("eps_grid", str(caught.exception))

    def test_missing_file(self):
        with self.assertRaises(CommandError) as caught:
            self.call("run", str(self.root / "absent.json"))
        self.assertEqual(caught.exception.returncode, 4)

    def test_failed_points_keep_the_journal(self):
        config = {
            "model": "kerr",
            "params": {"delta": -2.0, "u": 1.0, "kappa": 0.5},
            "sweep": {"N_list": [1], "eps_grid": {"values": [0.8, 0.9]}},
            "output": str(self.root / "kerr.csv"),
        }
        path = self.write_config("kerr.json", config)
        with mock.patch("fluxlab.kerr_model.converged_steady_state", side_effect=EigensolverError("stalled")):
            with self.assertRaises(CommandError) as caught:
                self.call("run", path)
            self.assertEqual(caught.exception.returncode, 3)
            self.assertTrue((self.root / "kerr.csv.partial").exists())
            self.assertFalse((self.root / "kerr.csv").exists())

            out, err = self.call("run", path, keep_going=True)
        self.assertIn("stalled", err)
        self.assertIn("Wrote 0 kerr rows", out)
        self.assertEqual(len(read_results(self.root / "kerr.csv")[1]), 0)


class CollapseCommandTests(CommandTestCase):
    def write_sweep(self, sizes):
        rows = [
            kerr_row(N, 0.95 * (1 + x / N), math.exp(-x ** 2), N * (1 + math.tanh(x)), gap=0.1 + x ** 2 / N)
            for N in sizes
            for x in np.linspace(-3, 3, 31)
        ]
        path = self.root / "kerr.csv"
        write_results(path, rows, "kerr", {"schema_version": 1, "model": "kerr"})
        return str(path)

    def test_collapse_with_explicit_eps_c(self):
        out, _ = self.call("collapse", self.write_sweep((10, 20)), eps_c=0.95)
        lines = out.splitlines()
        self.assertEqual(lines[0], "# eps_c: 0.94999999999999996")
        metric = float(lines[1].split(":")[1])
        self.assertLess(metric, 1e-9)
        self.assertIn("x,Pi_u,Pi_d_over_N,N", lines)

    def test_collapse_estimates_eps_c(self):
        out, _ = self.call("collapse", self.write_sweep((10, 20)))
        eps_c = float(out.splitlines()[0].split(":")[1])
        self.assertAlmostEqual(eps_c, 0.95, places=6)

    def test_single_size_is_undefined(self):
        out, _ = self.call("collapse", self.write_sweep((10,)), eps_c=0.95)
        self.assertIn("# collapse_metric: undefined", out)

    def test_min_N_filter(self):
        out, _ = self.call("collapse", self.write_sweep((10, 20, 40)), eps_c=0.95, min_N=20)
        self.assertNotIn("N=10..20", out)
        self.assertIn("# spread N=20..40:", out)

    def test_rejects_dicke_results(self):
        path = self.root / "dicke.csv"
        write_results(path, [dicke_row(0.3, 1.0)], "dicke", {"model": "dicke", "lambda_c": LAMBDA_C})
        with self.assertRaises(CommandError) as caught:
            self.call("collapse", str(path))
        self.assertEqual(caught.exception.returncode, 2)


class FitDivergenceCommandTests(CommandTestCase):
    def write_scan(self, lam, values, **metadata):
        path = self.root / "dicke.csv"
        rows = [dicke_row(l, v) for l, v in zip(lam, values)]
        write_results(path, rows, "dicke", {"model": "dicke", "lambda_c": LAMBDA_C, **metadata})
        return str(path)

    def test_recovers_synthetic_exponent(self):
        lam = LAMBDA_C * np.concatenate([np.linspace(0.85, 0.995, 146), np.linspace(1.005, 1.15, 146)])
        path = self.write_scan(lam, 0.2 / np.abs(LAMBDA_C - lam))
        out, err = self.call("fit_divergence", path, "--window", "0.01,0.1")
        self.assertIn("window: 0.01,0.1", out)
        self.assertIn("left: slope=-1.000000", out)
        self.assertIn("right: slope=-1.000000", out)
        self.assertEqual(err, "")

    def test_warns_inside_gamma_core(self):
        lam = LAMBDA_C * np.concatenate([np.linspace(0.85, 0.995, 146), np.linspace(1.005, 1.15, 146)])
        path = self.write_scan(lam, 0.2 / np.abs(LAMBDA_C - lam), gamma_core=0.05)
        _, err = self.call("fit_divergence", path)
        self.assertIn("gamma-rounded core", err)

    def test_too_few_points(self):
        lam = LAMBDA_C * np.array([0.95, 0.97, 1.03, 1.05])
        path = self.write_scan(lam, 1.0 / np.abs(LAMBDA_C - lam))
        with self.assertRaises(CommandError) as caught:
            self.call("fit_divergence", path)
        self.assertEqual(caught.exception.returncode, 3)

    def test_needs_lambda_c(self):
        path = self.root / "dicke.csv"
        write_results(path, [dicke_row(0.3, 1.0)], "dicke", {"model": "dicke"})
        with self.assertRaises(CommandError) as caught:
            self.call("fit_divergence", str(path))
        self.assertEqual(caught.exception.returncode, 2)


class ResultsFileTests(CommandTestCase):
    def test_values_survive_a_round_trip(self):
        rows = [kerr_row(10, 0.1 + 0.2, math.pi / 7, math.e * 1e-17)]
        path = self.root / "kerr.csv"
        write_results(path, rows, "kerr", {"model": "kerr", "schema_version": 1})
        metadata, frame = read_results(path)
        self.assertEqual(frame.loc[0, "eps"], 0.1 + 0.2)
        self.assertEqual(frame.loc[0, "Pi_u"], math.pi / 7)
        self.assertEqual(frame.loc[0, "Pi_d"], math.e * 1e-17)
        self.assertEqual(metadata["schema_version"], "1")

    def test_rows_are_sorted(self):
        rows = [kerr_row(20, 0.9, 0, 0), kerr_row(10, 1.0, 0, 0), kerr_row(10, 0.8, 0, 0)]
        path = self.root / "kerr.csv"
        frame = write_results(path, rows, "kerr", {"model": "kerr"})
        self.assertEqual(list(zip(frame["N"], frame["eps"])), [(10, 0.8), (10, 1.0), (20, 0.9)])

    def test_rejects_foreign_columns(self):
        path = self.root / "other.csv"
        path.write_text("# model: kerr\nmodel,N,eps\nkerr,1,0.5\n", encoding="utf-8")
        with self.assertRaises(SchemaError):
            read_results(path)


class ConfigSerializerTests(SimpleTestCase):
    def test_cavity_becomes_a_linear_kerr_cavity(self):
        serializer = RunConfigSerializer(data={"model": "cavity", "params": {"E": 2.0, "kappa": 1.0},
                                               "output": "out.csv"})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        params = serializer.validated_data["params"]
        self.assertIsInstance(params, KerrParams)
        self.assertEqual((params.delta, params.eps, params.kappa), (0.0, 2.0, 1.0))
        self.assertEqual(serializer.validated_data["sweep"]["N"], 1)
        self.assertEqual(serializer.validated_data["numerics"]["mc_samples"], 0)

    def test_rejects_unsupported_schema(self):
        serializer = RunConfigSerializer(data={"schema_version": 9, "model": "cavity",
                                               "params": {"E": 1.0, "kappa": 1.0}, "output": "o.csv"})
        self.assertFalse(serializer.is_valid())
        self.assertIn("schema_version", serializer.errors)

    def test_rejects_non_physical_parameters(self):
        serializer = RunConfigSerializer(data={"model": "kerr", "params": {"delta": -2.0, "u": 1.0, "kappa": -1.0},
                                               "sweep": {"eps_grid": {"values": [1.0]}}, "output": "o.csv"})
        self.assertFalse(serializer.is_valid())
        self.assertIn("params", serializer.errors)

    def test_relative_grid_scales(self):
        grid = expand_grid({"min": 0.5, "max": 1.5, "count": 3, "relative": True}, scale=2.0)
        self.assertEqual(grid, [1.0, 2.0, 3.0])
        self.assertEqual(expand_grid({"values": [0.3]}, scale=2.0), [0.3])


class ConsoleScriptTests(SimpleTestCase):
    def test_hyphenated_alias(self):
        with mock.patch("django.core.management.execute_from_command_line") as execute:
            cli.main(["prog", "fit-divergence", "results.csv"])
        execute.assert_called_once_with(["wehrlflux", "fit_divergence", "results.csv"])
        self.assertEqual(os.environ["DJANGO_SETTINGS_MODULE"], "wehrlproject.settings")
