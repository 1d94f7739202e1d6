import csv
import json
import os
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from django.conf import settings

from .data_moments import DataMoments
from .lmi_synthesis import SynthesisResult
from .noise_bounds import GainCertificate
from .signals_sim import FilteredData, SignalSpec, Trajectory

RUN_COLUMNS = [
    "level",
    "delta_w",
    "run",
    "seed",
    "rho",
    "lambda_min_z",
    "status",
    "spectral_abscissa",
]
SUMMARY_COLUMNS = [
    "level",
    "delta_w",
    "rho_q1",
    "rho_median",
    "rho_q3",
    "feasible_pct",
    "failure_pct",
]
FLOAT_FORMAT = "%.17g"


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    return str(value)


class CsvExporter:
    """
    Reads and writes the CSV artifacts of an experiment.

    Matrix files are sectioned: a '#section,<name>,<rows>,<cols>' line
    followed by the rows, and '#meta,<key>,<value>' lines for scalars.
    Floats are written with 17 significant digits so they read back exactly.
    """

    @staticmethod
    def get_output_dir(out: Optional[str] = None) -> Path:
        """Get or create the output directory"""
        output_dir = Path(out) if out else Path(settings.STABILIZATION["OUTPUT_DIR"])
        os.makedirs(output_dir, exist_ok=True)
        return output_dir

    @staticmethod
    def write_sections(path: Path, sections: Dict[str, np.ndarray], meta: Optional[Dict] = None) -> Path:
        with open(path, "w", newline="") as handle:
            for key, value in (meta or {}).items():
                handle.write(f"#meta,{key},{_fmt(value)}\n")
            for name, matrix in sections.items():
                matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
                handle.write(f"#section,{name},{matrix.shape[0]},{matrix.shape[1]}\n")
                if matrix.size:
                    np.savetxt(handle, matrix, fmt=FLOAT_FORMAT, delimiter=",")
        return path

    @staticmethod
    def read_sections(path: Path) -> Tuple[Dict[str, np.ndarray], Dict[str, str]]:
        sections: Dict[str, np.ndarray] = {}
        meta: Dict[str, str] = {}
        with open(path) as handle:
            lines = [line.strip() for line in handle if line.strip()]

        index = 0
        while index < len(lines):
            parts = lines[index].split(",")
            if parts[0] == "#meta":
                meta[parts[1]] = ",".join(parts[2:])
                index += 1
            elif parts[0] == "#section":
                name, rows, cols = parts[1], int(parts[2]), int(parts[3])
                block = lines[index + 1:index + 1 + rows] if cols else []
                values = [[float(item) for item in row.split(",")] for row in block]
                sections[name] = np.array(values, dtype=float).reshape(rows, cols)
                index += 1 + len(block)
            else:
                raise ValueError(f"unexpected line in {path}: {lines[index]}")
        return sections, meta

    @classmethod
    def write_moments(cls, path: Path, moments: DataMoments) -> Path:
        return cls.write_sections(
            path,
            {"Y": moments.Y, "X": moments.X, "Z": moments.Z, "Delta": moments.Delta},
            meta={"T": moments.T},
        )

    @classmethod
    def read_moments(cls, path: Path) -> DataMoments:
        sections, meta = cls.read_sections(path)
        return DataMoments(
            Y=sections["Y"],
            X=sections["X"],
            Z=sections["Z"],
            T=float(meta["T"]),
            Delta=sections["Delta"],
        )

    @classmethod
    def write_synthesis(
        cls,
        path: Path,
        result: SynthesisResult,
        controller: Optional[Dict[str, np.ndarray]] = None,
    ) -> Path:
        meta = {
            "status": result.status,
            "lmi_margin": result.lmi_margin,
            "p_margin": result.p_margin,
            "eps": result.eps,
            "condition_number": result.condition_number,
            "solver_status": result.diagnostics.get("solver_status", ""),
        }
        sections = {}
        if result.P is not None:
            sections.update(P=result.P, Q=result.Q)
        if result.K is not None:
            sections["K"] = result.K
        sections.update(controller or {})
        return cls.write_sections(path, sections, meta)

    @classmethod
    def read_synthesis(cls, path: Path) -> SynthesisResult:
        sections, meta = cls.read_sections(path)
        return SynthesisResult(
            status=meta["status"],
            P=sections.get("P"),
            Q=sections.get("Q"),
            K=sections.get("K"),
            lmi_margin=float(meta["lmi_margin"]),
            p_margin=float(meta["p_margin"]),
            eps=float(meta["eps"]),
            condition_number=float(meta["condition_number"]),
            diagnostics={"solver_status": meta.get("solver_status", "")},
        )

    @staticmethod
    def write_trajectory(path: Path, traj: Trajectory, fdata: Optional[FilteredData] = None) -> Path:
        columns = [("t", traj.t[:, None])]
        for label in ("u", "y", "w", "v", "x"):
            columns.append((label, getattr(traj, label)))
        if traj.xc is not None:
            columns.append(("xc", traj.xc))
        if fdata is not None:
            columns.extend([("chi", fdata.chi), ("zhat", fdata.z_hat)])

        header = []
        for label, values in columns:
            if label == "t":
                header.append("t")
            else:
                header.extend(f"{label}_{i}" for i in range(1, values.shape[1] + 1))
        data = np.hstack([values for _, values in columns])
        np.savetxt(path, data, fmt=FLOAT_FORMAT, delimiter=",", header=",".join(header), comments="")
        return path

    @staticmethod
    def write_rows(path: Path, columns: List[str], rows: Iterable[Dict]) -> Path:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(row[column]) for column in columns])
        return path

    @classmethod
    def write_runs(cls, path: Path, rows: Iterable[Dict]) -> Path:
        return cls.write_rows(path, RUN_COLUMNS, rows)

    @classmethod
    def write_summary(cls, path: Path, rows: Iterable[Dict]) -> Path:
        return cls.write_rows(path, SUMMARY_COLUMNS, rows)

    @staticmethod
    def read_rows(path: Path) -> List[Dict[str, str]]:
        with open(path, newline="") as handle:
            return list(csv.DictReader(handle))

    @classmethod
    def write_gamma_trace(cls, path: Path, cert: GainCertificate, Delta: np.ndarray) -> Path:
        rows = [
            {"gamma": gamma, "dre_solvable": int(solvable)} for gamma, solvable in cert.trace
        ]
        cls.write_rows(path, ["gamma", "dre_solvable"], rows)
        with open(path, "a") as handle:
            handle.write(f"#gamma_inf,{_fmt(cert.gamma_inf)}\n")
            handle.write(f"#gamma,{_fmt(cert.gamma)}\n")
            handle.write(f"#dre_solved,{int(cert.dre_solved)}\n")
            handle.write(f"#process_noise,{int(cert.process_noise)}\n")
            handle.write("#Delta," + ",".join(_fmt(v) for v in np.ravel(Delta)) + "\n")
        return path

    @staticmethod
    def write_noise(path: Path, w_spec: SignalSpec, v_spec: SignalSpec) -> Path:
        with open(path, "w") as handle:
            json.dump({"w": w_spec.to_dict(), "v": v_spec.to_dict()}, handle, indent=2)
        return path

    @staticmethod
    def read_noise(path: Path) -> Tuple[SignalSpec, SignalSpec]:
        with open(path) as handle:
            data = json.load(handle)
        return SignalSpec.from_dict(data["w"]), SignalSpec.from_dict(data["v"])
