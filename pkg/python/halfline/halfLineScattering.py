# This file is part of halfline.
#
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

"""Batch command-line front end for the direct and inverse problems.
"""

import argparse
import ast
import json
import logging
import os

import numpy as np
import scipy.optimize as scipyOptimize

from lsst.pex.config import Config, ConfigurableField, Field
from lsst.pipe.base import Task, Struct

from .potentialModel import (BoundaryParameter, integralOfPotential, makeOperatorSpec, readOperatorSpec,
                             readSampledFunction, writeOperatorSpec, writeSampledFunction)
from .directSolver import DirectSolverTask, fullLineCoefficients
from .resonanceAnalyzer import ResonanceAnalysisTask
from .darbouxEngine import DarbouxTask
from .marchenkoInversion import MarchenkoInversionTask
from .gelfandLevitanInversion import GelfandLevitanInversionTask
from .utils import NumericalError, VerificationError, roundFloats

__all__ = ["EXAMPLE_NAMES", "EXAMPLE_RESONANCE_TOLERANCES", "EXAMPLE_DIRECT_GRIDS", "rootSolveExample63A",
           "exampleOperatorSpec", "HalfLineScatteringConfig", "HalfLineScatteringTask", "run"]

log = logging.getLogger(__name__)

np.seterr(all="ignore")

EXAMPLE_NAMES = ("ex61", "ex62a", "ex62b", "ex62c", "ex63")

# v = 0.003521 is rounded, so ex62c only has a near-double zero of H.
EXAMPLE_RESONANCE_TOLERANCES = {
    "ex62c": {"mergeSeparation": 2e-2, "nearDoubleTolerance": 1e-4, "doubleSlopeTolerance": 1e-3},
}

# (kMax, dk) of the scattering data the Marchenko demos invert.
EXAMPLE_DIRECT_GRIDS = {"ex62a": (400.0, 0.02), "ex63": (400.0, 0.02)}

EXIT_OK = 0
EXIT_INVALID_INPUT = 1
EXIT_NUMERICAL = 2
EXIT_VERIFICATION = 3


def rootSolveExample63A(xtol=1e-14):
    """Depth ``a`` of the two-cell Dirichlet operator whose full-line
    transmission coefficient has no poles on the positive imaginary axis
    and does not vanish at k = 0: the root on (0, pi^2) of
    ``sqrt(a) tan(sqrt(a)/2) - tanh(1/2)``.
    """
    def func(a):
        root = np.sqrt(a)
        return root*np.tan(0.5*root) - np.tanh(0.5)

    return float(scipyOptimize.brentq(func, 1e-12, np.pi**2 - 1e-9, xtol=xtol))


def exampleOperatorSpec(name, nCells=8):
    """Operator of one of the worked examples.

    Parameters
    ----------
    name : `str`
        One of `EXAMPLE_NAMES`.
    nCells : `int`, optional
        Number of cells of the constant wells (even; the two-cell
        example uses halves of ``nCells`` each).

    Returns
    -------
    spec : `halfline.OperatorSpec`

    Raises
    ------
    ValueError
        If the name is unknown.
    """
    if name == "ex61":
        return makeOperatorSpec(1.0, np.zeros(nCells), BoundaryParameter.nonDirichlet(-1.0))
    if name == "ex62a":
        return makeOperatorSpec(1.0, np.full(nCells, -10.0), BoundaryParameter.nonDirichlet(1.0))
    if name == "ex62b":
        return makeOperatorSpec(1.0, np.full(nCells, -0.2), BoundaryParameter.nonDirichlet(6.0))
    if name == "ex62c":
        return makeOperatorSpec(1.0, np.full(nCells, 0.003521), BoundaryParameter.nonDirichlet(-3.0))
    if name == "ex63":
        a = rootSolveExample63A()
        half = nCells//2
        return makeOperatorSpec(1.0, np.concatenate((np.ones(half), np.full(half, -a))),
                                BoundaryParameter.dirichlet())
    raise ValueError("Unknown example %r; choose from %s" % (name, ", ".join(EXAMPLE_NAMES)))


class HalfLineScatteringConfig(Config):
    direct = ConfigurableField(target=DirectSolverTask, doc="Direct problem on a real k-grid")
    resonance = ConfigurableField(target=ResonanceAnalysisTask, doc="Imaginary resonances")
    darboux = ConfigurableField(target=DarbouxTask, doc="Bound-state adds and removes")
    marchenko = ConfigurableField(target=MarchenkoInversionTask, doc="Recovery from S")
    gelfandLevitan = ConfigurableField(target=GelfandLevitanInversionTask, doc="Recovery from |F|")
    significantDigits = Field(dtype=int, default=12, doc="Significant digits of floats in JSON output")
    exampleCells = Field(dtype=int, default=8, doc="Cells of the demo operators")

    def validate(self):
        Config.validate(self)
        if not 1 <= self.significantDigits <= 17:
            raise ValueError("significantDigits must lie in [1, 17], got %d" % (self.significantDigits,))
        if self.exampleCells < 2 or self.exampleCells % 2:
            raise ValueError("exampleCells must be a positive even number, got %d" % (self.exampleCells,))


def _applyOverride(config, assignment):
    name, sep, text = assignment.partition("=")
    if not sep:
        raise ValueError("Config override %r is not of the form name=value" % (assignment,))
    try:
        value = ast.literal_eval(text)
    except (ValueError, SyntaxError):
        value = text
    *parents, field = name.strip().split(".")
    target = config
    for parent in parents:
        target = getattr(target, parent)
    try:
        setattr(target, field, value)
    except (AttributeError, TypeError) as e:
        raise ValueError("Cannot set %s = %r: %s" % (name, value, e)) from e


def _enableVerification(config):
    """Make every stage raise `VerificationError` on a failed check."""
    config.darboux.doVerify = True
    config.marchenko.doVerify = True
    config.gelfandLevitan.doVerify = True
    config.gelfandLevitan.darboux.doVerify = True


class HalfLineScatteringTask(Task):
    """Run one subcommand and write its artifacts.
    """
    _DefaultName = "halfLineScattering"
    ConfigClass = HalfLineScatteringConfig

    def __init__(self, *args, **kwargs):
        Task.__init__(self, *args, **kwargs)
        for name in ("direct", "resonance", "darboux", "marchenko", "gelfandLevitan"):
            self.makeSubtask(name)

    @classmethod
    def _makeArgumentParser(cls):
        parser = argparse.ArgumentParser(prog=cls._DefaultName,
                                         description="Direct and inverse scattering on the half line")
        parser.add_argument("-c", "--config", dest="overrides", action="append", default=[],
                            metavar="NAME=VALUE", help="Config override, e.g. marchenko.nCells=256")
        parser.add_argument("-C", "--config-file", dest="configFiles", action="append", default=[],
                            help="Config override file, applied before -c overrides")
        parser.add_argument("--loglevel", default="INFO", help="Logging level")
        commands = parser.add_subparsers(dest="command", required=True)

        direct = commands.add_parser("direct", help="Jost function and scattering matrix of an operator")
        direct.add_argument("spec", help="Operator spec JSON")
        direct.add_argument("--out", required=True, help="Output directory")
        direct.add_argument("--kmax", type=float, default=None, help="Largest k of the grid")
        direct.add_argument("--dk", type=float, default=None, help="Step of the k-grid")

        resonances = commands.add_parser("resonances", help="Imaginary resonances and their eligibility")
        resonances.add_argument("spec", help="Operator spec JSON")
        resonances.add_argument("--out", required=True, help="Output directory")
        resonances.add_argument("--beta-max", dest="betaMax", type=float, default=None,
                                help="Search window on the imaginary axis")
        resonances.add_argument("--h-csv", dest="hCsv", action="store_true", help="Also write H(beta)")

        darboux = commands.add_parser("darboux", help="Add or remove a bound state")
        darboux.add_argument("action", choices=("add", "remove"))
        darboux.add_argument("spec", help="Operator spec JSON")
        darboux.add_argument("--gamma", type=float, required=True, help="Location i*gamma")
        darboux.add_argument("--g", type=float, default=None,
                             help="Norming constant g; required for remove, defaults to the "
                                  "support-preserving value for add")
        darboux.add_argument("--out", required=True, help="Output operator spec JSON")
        darboux.add_argument("--verify", action="store_true", help="Check the Jost function of the result")

        invertS = commands.add_parser("invert-s", help="Recover operators from S(k)")
        invertS.add_argument("scattering", help="CSV of S(k)")
        invertS.add_argument("--out", required=True, help="Output directory")
        invertS.add_argument("--bmax", type=float, default=None, help="Support estimate")
        invertS.add_argument("--cells", type=int, default=None, help="Cells of the recovered potential")
        invertS.add_argument("--verify", action="store_true", help="Fail when a verification fails")

        invertAbsF = commands.add_parser("invert-absf", help="Recover every operator from |F(k)|")
        invertAbsF.add_argument("absJost", help="CSV of |F(k)|")
        invertAbsF.add_argument("--out", required=True, help="Output directory")
        invertAbsF.add_argument("--beta-max", dest="betaMax", type=float, default=None,
                                help="Resonance window of the base operator")
        invertAbsF.add_argument("--bmax", type=float, default=None, help="Support estimate")
        invertAbsF.add_argument("--cells", type=int, default=None, help="Cells of the base operator")
        invertAbsF.add_argument("--verify", action="store_true", help="Fail when a verification fails")

        demo = commands.add_parser("demo", help="Reproduce a worked example; every verification is enforced")
        demo.add_argument("example", choices=EXAMPLE_NAMES)
        demo.add_argument("--out", required=True, help="Output directory")
        return parser

    @classmethod
    def _makeConfig(cls, args):
        config = cls.ConfigClass()
        if args.command == "demo":
            for name, value in EXAMPLE_RESONANCE_TOLERANCES.get(args.example, {}).items():
                setattr(config.resonance, name, value)
            if args.example in EXAMPLE_DIRECT_GRIDS:
                config.direct.kMax, config.direct.dk = EXAMPLE_DIRECT_GRIDS[args.example]
        for path in args.configFiles:
            config.load(path)
        for assignment in args.overrides:
            _applyOverride(config, assignment)
        command = args.command
        if command == "direct":
            if args.kmax is not None:
                config.direct.kMax = args.kmax
            if args.dk is not None:
                config.direct.dk = args.dk
        elif command == "resonances" and args.betaMax is not None:
            config.resonance.betaMax = args.betaMax
        elif command == "darboux" and args.verify:
            config.darboux.doVerify = True
        elif command == "invert-s":
            if args.bmax is not None:
                config.marchenko.bMax = args.bmax
            if args.cells is not None:
                config.marchenko.nCells = args.cells
            if args.verify:
                config.marchenko.doVerify = True
        elif command == "invert-absf":
            if args.betaMax is not None:
                config.gelfandLevitan.betaMax = args.betaMax
            if args.bmax is not None:
                config.gelfandLevitan.bMax = args.bmax
            if args.cells is not None:
                config.gelfandLevitan.nCells = args.cells
            if args.verify:
                _enableVerification(config)
        elif command == "demo":
            _enableVerification(config)
        config.validate()
        config.freeze()
        return config

    @classmethod
    def parseAndRun(cls, args=None):
        """Parse the command line, run the subcommand and return the exit
        status: 0 on success, 1 for invalid input, 2 for a numerical
        failure and 3 for a failed verification.
        """
        parsed = cls._makeArgumentParser().parse_args(args)
        logging.basicConfig(level=parsed.loglevel.upper(),
                            format="%(name)s %(levelname)s: %(message)s")
        try:
            task = cls(config=cls._makeConfig(parsed))
            task.runCommand(parsed)
        except VerificationError as e:
            log.error("Verification failed: %s", e)
            return EXIT_VERIFICATION
        except NumericalError as e:
            log.error("Numerical failure: %s", e)
            return EXIT_NUMERICAL
        except (ValueError, OSError) as e:
            log.error("Invalid input: %s", e)
            return EXIT_INVALID_INPUT
        return EXIT_OK

    def runCommand(self, args):
        command = args.command
        if command == "direct":
            return self.runDirect(readOperatorSpec(args.spec), args.out)
        if command == "resonances":
            return self.runResonances(readOperatorSpec(args.spec), args.out, args.hCsv)
        if command == "darboux":
            return self.runDarboux(readOperatorSpec(args.spec), args.action, args.gamma, args.g, args.out)
        if command == "invert-s":
            return self.runInvertS(readSampledFunction(args.scattering), args.out)
        if command == "invert-absf":
            return self.runInvertAbsF(readSampledFunction(args.absJost), args.out)
        return self.runDemo(args.example, args.out)

    def writeJson(self, data, path):
        with open(path, "w") as outFile:
            json.dump(roundFloats(data, self.config.significantDigits), outFile, indent=2, sort_keys=True)
            outFile.write("\n")
        self.log.debug("Wrote %s", path)

    def runDirect(self, spec, outDir):
        os.makedirs(outDir, exist_ok=True)
        result = self.direct.run(spec)
        writeSampledFunction(result.jost, os.path.join(outDir, "jost.csv"))
        writeSampledFunction(result.scattering, os.path.join(outDir, "scattering.csv"))
        writeSampledFunction(result.absJost, os.path.join(outDir, "absJost.csv"))
        self.writeJson(result.boundStates.toList(), os.path.join(outDir, "boundStates.json"))
        return result

    def runResonances(self, spec, outDir, writeH=False):
        os.makedirs(outDir, exist_ok=True)
        result = self.resonance.run(spec)
        self.writeJson(result.report.toDict(), os.path.join(outDir, "resonances.json"))
        if writeH:
            writeSampledFunction(result.hSamples, os.path.join(outDir, "hFunction.csv"))
        return result

    def runDarboux(self, spec, action, gamma, g, outPath):
        if action == "add":
            step = self.darboux.add(spec, gamma, None if g is None else g*g)
        else:
            if g is None:
                raise ValueError("darboux remove needs --g")
            step = self.darboux.remove(spec, gamma, g)
        parent = os.path.dirname(outPath)
        if parent:
            os.makedirs(parent, exist_ok=True)
        writeOperatorSpec(step.spec, outPath)
        return step

    def runInvertS(self, S, outDir):
        os.makedirs(outDir, exist_ok=True)
        struct = self.marchenko.run(S)
        for i, solution in enumerate(struct.result.solutions, 1):
            self.writeJson(solution.toDict(), os.path.join(outDir, "solution%d.json" % i))
        report = struct.result.toDict()
        report["data"] = struct.data.toDict()
        self.writeJson(report, os.path.join(outDir, "report.json"))
        return struct

    def runInvertAbsF(self, absF, outDir):
        os.makedirs(outDir, exist_ok=True)
        family = self.gelfandLevitan.run(absF).family
        for member in family.members:
            data = member.spec.toDict()
            data["bound_states"] = member.boundStates.toList()
            self.writeJson(data, os.path.join(outDir, "member_%s.json" % member.label))
        self.writeJson(family.toDict(), os.path.join(outDir, "family.json"))
        return family

    def runDemo(self, name, outDir):
        """Reproduce a worked example and write ``report.json`` next to the
        operator spec and the CSVs of the direct problem.
        """
        os.makedirs(outDir, exist_ok=True)
        spec = exampleOperatorSpec(name, self.config.exampleCells)
        writeOperatorSpec(spec, os.path.join(outDir, "spec.json"))
        direct = self.runDirect(spec, outDir)
        report = {"example": name, "spec": spec.toDict(), "bound_states": direct.boundStates.toList(),
                  "integral": integralOfPotential(spec)}
        if name != "ex63":
            report["resonances"] = self.runResonances(spec, outDir, writeH=True).report.toDict()
        if name == "ex61":
            step = self.darboux.add(spec, 1.0)
            writeOperatorSpec(step.spec, os.path.join(outDir, "added.json"))
            report["darboux_add"] = {"g_squared": step.gSquared, "cot_theta": step.boundary.cotTheta,
                                     "max_abs_potential": float(np.max(np.abs(step.spec.potential.values)))}
        elif name == "ex62a":
            report["inversion"] = self.runInvertS(direct.scattering,
                                                  os.path.join(outDir, "inversion")).result.toDict()
        elif name == "ex62b":
            family = self.runInvertAbsF(direct.absJost, os.path.join(outDir, "family"))
            report["family"] = family.toDict()
        elif name == "ex63":
            coefficients = fullLineCoefficients(spec, 0.0)
            report["a"] = rootSolveExample63A()
            report["full_line_at_zero"] = {"T": complex(coefficients.T).real,
                                           "L": complex(coefficients.L).real,
                                           "R": complex(coefficients.R).real}
            report["inversion"] = self.runInvertS(direct.scattering,
                                                  os.path.join(outDir, "inversion")).result.toDict()
        self.writeJson(report, os.path.join(outDir, "report.json"))
        self.log.info("Example %s written to %s", name, outDir)
        return Struct(spec=spec, report=report)


def run(argv=None):
    return HalfLineScatteringTask.parseAndRun(argv)
