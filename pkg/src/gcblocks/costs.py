"""Analytic parameter and multiply-accumulate counting.

Conventions, chosen to land on the published classification-backbone
figures (25.56M parameters / 3.86G for ResNet-50 at 224x224):

* one multiply-accumulate (MAC) = one FLOP; the headline count covers the
  matrix products of convolutions, fully-connected layers and the blocks'
  projections and poolings;
* batch-norm, ReLU, softmax, layer-norm, sigmoid, pooling layers and
  residual adds are tallied separately (``aux``) and excluded from the
  headline;
* convolutions are bias-free, batch-norm affine pairs and the classifier
  bias are counted, and downsampling happens in the first 1x1 convolution
  of a stage (the variant whose headline count is ~3.86G rather than ~4.1G);
* inserted blocks are bias-free throughout.

The residual stages run at 56/28/14/7 pixels with 256/512/1024/2048 output
channels for a 224x224 input; blocks may be inserted into stages c3..c5
only.
"""

import configparser
from dataclasses import dataclass, field, replace

from .blocks import BlockSpec
from .types import FormatError, SpecError

STAGE_BLOCKS = {
    "resnet50": (3, 4, 6, 3),
    "resnet101": (3, 4, 23, 3),
}
STAGE_NAMES = ("c2", "c3", "c4", "c5")
STAGE_MID = (64, 128, 256, 512)
STAGE_OUT = (256, 512, 1024, 2048)
INSERTABLE_STAGES = ("c3", "c4", "c5")
INSERTION_MODES = ("all_blocks", "last_block_of_c4")


@dataclass(frozen=True)
class BackboneDesc:
    """A standard residual classification backbone."""

    arch: str = "resnet50"
    input_resolution: tuple[int, int] = (224, 224)
    num_classes: int = 1000

    def __post_init__(self):
        if self.arch not in STAGE_BLOCKS:
            raise SpecError(f"unknown arch {self.arch!r}, expected {tuple(STAGE_BLOCKS)}")
        h, w = self.input_resolution
        if h < 32 or w < 32:
            raise SpecError(f"input resolution {self.input_resolution} too small")
        if self.num_classes < 1:
            raise SpecError("num_classes must be positive")


@dataclass(frozen=True)
class InsertionPlan:
    """Where copies of a block go: every residual unit of the chosen stages,
    or the single unit before the last one of c4 (the one-block ablation)."""

    block: BlockSpec
    stages: tuple[str, ...] = ("c3", "c4", "c5")
    mode: str = "all_blocks"

    def __post_init__(self):
        if self.mode not in INSERTION_MODES:
            raise SpecError(f"unknown insertion mode {self.mode!r}")
        stages = tuple(self.stages)
        bad = [s for s in stages if s not in INSERTABLE_STAGES]
        if bad:
            raise SpecError(f"blocks can only be inserted into {INSERTABLE_STAGES}, got {bad}")
        if self.mode == "all_blocks" and not stages:
            raise SpecError("all_blocks mode needs at least one stage")
        object.__setattr__(self, "stages", stages)


@dataclass
class CostReport:
    """Totals plus a named breakdown.

    For a backbone the breakdown is keyed by stage (plus ``stem``/``head``
    and the inserted ``blocks`` per stage); for a single block it is keyed
    by operation.  ``added`` fields cover inserted blocks only, so
    ``total = baseline + added`` holds exactly.
    """

    params_total: int = 0
    flops_total: int = 0
    params_added: int = 0
    flops_added: int = 0
    aux_flops_total: int = 0
    breakdown: dict = field(default_factory=dict)

    def add(self, group: str, name: str, params: int = 0, macs: int = 0, aux: int = 0):
        entry = self.breakdown.setdefault(group, {})
        cell = entry.setdefault(name, {"params": 0, "macs": 0, "aux": 0})
        cell["params"] += params
        cell["macs"] += macs
        cell["aux"] += aux
        self.params_total += params
        self.flops_total += macs
        self.aux_flops_total += aux


def count_block(spec: BlockSpec, channels: int, height: int, width: int, frames: int = 1) -> CostReport:
    """Cost of one block on a ``channels x height x width (x frames)`` map.

    Headline MACs cover every matrix product, including the pairwise
    ``N_p x N_p`` attention products of the non-local block; softmax, ReLU,
    layer norm, sigmoid and the fusion itself land in ``aux``.
    """
    if min(height, width, frames) < 1:
        raise SpecError("block cost needs positive spatial dimensions")
    spec = replace(spec, channels=channels)
    n = height * width * frames
    c = channels
    r = CostReport()
    g = "block"

    if spec.kind == "nl":
        inner = spec.inner_channels
        if spec.variant == "gaussian":
            r.add(g, "attention_logits", macs=n * n * c)
            r.add(g, "softmax", aux=3 * n * n)
        elif spec.variant in ("e_gaussian", "dot"):
            r.add(g, "query", params=inner * c, macs=inner * c * n)
            r.add(g, "key", params=inner * c, macs=inner * c * n)
            r.add(g, "attention_logits", macs=n * n * inner)
            if spec.variant == "e_gaussian":
                r.add(g, "softmax", aux=3 * n * n)
            else:
                r.add(g, "scale", aux=n * n)
        else:  # concat
            r.add(g, "query", params=2 * c, macs=2 * c * n)
            r.add(g, "attention_logits", aux=3 * n * n)  # pairwise add, relu, scale
        r.add(g, "value", params=inner * c, macs=inner * c * n)
        r.add(g, "attention_apply", macs=n * n * inner)
        r.add(g, "out", params=c * inner, macs=c * inner * n)
        r.add(g, "fusion", aux=c * n)
    elif spec.kind in ("snl", "snl_factored"):
        r.add(g, "key", params=c, macs=c * n)
        r.add(g, "softmax", aux=3 * n)
        if spec.kind == "snl":
            # value transform at every position, then pool the transformed map
            r.add(g, "value", params=c * c, macs=n * c * c)
            r.add(g, "pool", macs=c * n)
        else:
            # pool first, one value transform on the pooled vector
            r.add(g, "pool", macs=c * n)
            r.add(g, "value", params=c * c, macs=c * c)
        r.add(g, "fusion", aux=c * n)
    else:
        hidden = spec.hidden_channels
        if spec.effective_pooling == "att":
            r.add(g, "key", params=c, macs=c * n)
            r.add(g, "softmax", aux=3 * n)
        r.add(g, "pool", macs=c * n)
        r.add(g, "down", params=hidden * c, macs=hidden * c)
        if spec.effective_fusion == "add":
            r.add(g, "layer_norm", params=2 * hidden, aux=5 * hidden)
            r.add(g, "relu", aux=hidden)
            r.add(g, "up", params=c * hidden, macs=c * hidden)
        else:
            r.add(g, "relu", aux=hidden)
            r.add(g, "up", params=c * hidden, macs=c * hidden)
            r.add(g, "sigmoid", aux=c)
        r.add(g, "fusion", aux=c * n)

    r.params_added = r.params_total
    r.flops_added = r.flops_total
    return r


def _conv_out(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size - kernel + 2 * padding) // stride + 1


def stage_geometry(desc: BackboneDesc) -> dict[str, tuple[int, int, int, int]]:
    """Per-stage ``(blocks, out_channels, height, width)`` after the stem."""
    h, w = desc.input_resolution
    h = _conv_out(h, 7, 2, 3)
    w = _conv_out(w, 7, 2, 3)
    h = _conv_out(h, 3, 2, 1)
    w = _conv_out(w, 3, 2, 1)
    geom = {}
    for i, name in enumerate(STAGE_NAMES):
        if name != "c2":  # c2 keeps the post-pool resolution
            h = _conv_out(h, 1, 2, 0)
            w = _conv_out(w, 1, 2, 0)
        geom[name] = (STAGE_BLOCKS[desc.arch][i], STAGE_OUT[i], h, w)
    return geom


def insertion_sites(desc: BackboneDesc, plan: InsertionPlan) -> list[tuple[str, int, int, int]]:
    """``(stage, channels, height, width)`` for every block the plan inserts."""
    geom = stage_geometry(desc)
    if plan.mode == "last_block_of_c4":
        _, c, h, w = geom["c4"]
        return [("c4", c, h, w)]
    sites = []
    for name in ("c3", "c4", "c5"):
        if name in plan.stages:
            blocks, c, h, w = geom[name]
            sites += [(name, c, h, w)] * blocks
    return sites


def count_backbone(desc: BackboneDesc, plan: InsertionPlan | None = None) -> CostReport:
    """Whole-backbone cost with optional inserted blocks.

    Inserted-block costs come from :func:`count_block` per site, so the
    report is exactly the baseline plus the sum over sites.
    """
    r = CostReport()
    h, w = desc.input_resolution

    def conv(group, name, cin, cout, k, hout, wout, bn=True):
        r.add(group, name, params=k * k * cin * cout, macs=k * k * cin * cout * hout * wout)
        if bn:
            r.add(group, name + ".bn", params=2 * cout, aux=2 * cout * hout * wout)

    h1, w1 = _conv_out(h, 7, 2, 3), _conv_out(w, 7, 2, 3)
    conv("stem", "conv1", 3, 64, 7, h1, w1)
    r.add("stem", "relu", aux=64 * h1 * w1)
    hp, wp = _conv_out(h1, 3, 2, 1), _conv_out(w1, 3, 2, 1)
    r.add("stem", "maxpool", aux=9 * 64 * hp * wp)

    cin = 64
    hs, ws = hp, wp
    for i, name in enumerate(STAGE_NAMES):
        blocks = STAGE_BLOCKS[desc.arch][i]
        mid, cout = STAGE_MID[i], STAGE_OUT[i]
        stride = 1 if name == "c2" else 2
        ho, wo = _conv_out(hs, 1, stride, 0), _conv_out(ws, 1, stride, 0)
        for b in range(blocks):
            first = b == 0
            s = stride if first else 1
            bin_ = cin if first else cout
            conv(name, f"b{b}.reduce", bin_, mid, 1, ho, wo)
            conv(name, f"b{b}.conv3", mid, mid, 3, ho, wo)
            conv(name, f"b{b}.expand", mid, cout, 1, ho, wo)
            if first:
                conv(name, f"b{b}.downsample", bin_, cout, 1, ho, wo)
            r.add(name, f"b{b}.relu", aux=(2 * mid + cout) * ho * wo)
            r.add(name, f"b{b}.residual", aux=cout * ho * wo)
        cin, hs, ws = cout, ho, wo

    r.add("head", "avgpool", aux=cin * hs * ws)
    r.add("head", "fc", params=cin * desc.num_classes + desc.num_classes,
          macs=cin * desc.num_classes)

    if plan is not None:
        for stage, c, sh, sw in insertion_sites(desc, plan):
            br = count_block(plan.block, c, sh, sw)
            cell = br.breakdown["block"]
            params = sum(op["params"] for op in cell.values())
            macs = sum(op["macs"] for op in cell.values())
            aux = sum(op["aux"] for op in cell.values())
            r.add(stage, f"blocks.{plan.block.kind}@{plan.block.position}",
                  params=params, macs=macs, aux=aux)
            r.params_added += params
            r.flops_added += macs
    return r


# ---------------------------------------------------------------------------
# Table rendering and published targets


def format_cost_row(label: str, report: CostReport) -> str:
    return " | ".join(
        [
            label,
            f"{report.params_total / 1e6:.2f}",
            f"{report.flops_total / 1e9:.2f}",
            f"{report.params_added / 1e6:.2f}",
            f"{report.flops_added / 1e9:.2f}",
        ]
    )


def emit_cost_table(entries) -> tuple[list[str], list[CostReport]]:
    """Render ``(label, desc, plan-or-None)`` entries as fixed-format rows.

    Values are megaparams and giga-MACs at two decimals, matching the
    published presentation; rows keep the input order.
    """
    header = "model | #params(M) | FLOPs(G) | added params(M) | added FLOPs(G)"
    lines = [header]
    reports = []
    for label, desc, plan in entries:
        report = count_backbone(desc, plan)
        reports.append(report)
        lines.append(format_cost_row(label, report))
    return lines, reports


@dataclass(frozen=True)
class Target:
    """A published figure with its tolerance.

    ``kind`` selects what is compared: total or added parameters, total
    FLOPs, or the relative FLOP increase over the same backbone without
    blocks.  Added-parameter targets are differences of two table values
    printed at 0.01M resolution, so they carry a +-0.01M quantization floor
    on top of the relative tolerance.
    """

    kind: str
    value: float
    rel_tol: float
    abs_floor: float = 0.0


PUBLISHED_TARGETS: dict[str, tuple[Target, ...]] = {
    "baseline": (
        Target("params_total", 25.56e6, 0.001),
        Target("flops_total", 3.86e9, 0.02),
    ),
    "plus_1nl": (Target("params_added", 2.10e6, 0.01, abs_floor=0.01e6),),
    "plus_1snl": (Target("params_added", 1.05e6, 0.01, abs_floor=0.01e6),),
    "plus_1gc": (Target("params_added", 0.13e6, 0.01, abs_floor=0.01e6),),
    "all_gc": (
        Target("params_added", 2.52e6, 0.01, abs_floor=0.01e6),
        Target("flops_increase", 0.003, 0.0),
    ),
}


def check_target(target: Target, report: CostReport) -> tuple[bool, float, float]:
    """Returns ``(ok, measured, allowed_deviation)`` for one target."""
    if target.kind == "flops_increase":
        baseline = report.flops_total - report.flops_added
        measured = report.flops_added / baseline
        return measured <= target.value, measured, target.value
    measured = float(getattr(report, target.kind))
    allowed = max(target.rel_tol * target.value, target.abs_floor)
    return abs(measured - target.value) <= allowed, measured, allowed


# ---------------------------------------------------------------------------
# Declarative table configs
#
# INI sections, one table row each.  Keys:
#   arch     = resnet50 | resnet101          (default resnet50)
#   input    = HxW                           (default 224x224)
#   classes  = int                           (default 1000)
#   block    = nl | snl | snl_factored | se | gc | framework   (omit for baseline)
#   variant  = gaussian | e_gaussian | dot | concat            (nl only)
#   ratio    = int                           (default 16)
#   pooling  = avg | att                     (framework only)
#   fusion   = add | scale                   (framework only)
#   position = after_add | after_1x1         (default after_1x1)
#   stages   = comma list from c3,c4,c5      (default c3,c4,c5)
#   mode     = all_blocks | last_block_of_c4 (default all_blocks)
#   target   = key into PUBLISHED_TARGETS        (optional pass/fail row)

DEFAULT_CONFIG = """\
[baseline-resnet50]
arch = resnet50
target = baseline

[plus-1nl]
arch = resnet50
block = nl
variant = e_gaussian
mode = last_block_of_c4
target = plus_1nl

[plus-1snl]
arch = resnet50
block = snl
mode = last_block_of_c4
target = plus_1snl

[plus-1gc]
arch = resnet50
block = gc
ratio = 16
mode = last_block_of_c4
target = plus_1gc

[all-gc]
arch = resnet50
block = gc
ratio = 16
stages = c3,c4,c5
mode = all_blocks
target = all_gc

[baseline-resnet101]
arch = resnet101
"""


@dataclass(frozen=True)
class TableEntry:
    label: str
    desc: BackboneDesc
    plan: InsertionPlan | None
    target: str | None


def parse_cost_config(text: str) -> list[TableEntry]:
    """Parse the INI cost-table schema documented above."""
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise FormatError(f"bad cost config: {exc}") from exc
    if not parser.sections():
        raise FormatError("cost config defines no table rows")

    entries = []
    for section in parser.sections():
        row = parser[section]
        known = {"arch", "input", "classes", "block", "variant", "ratio", "pooling",
                 "fusion", "position", "stages", "mode", "target"}
        unknown = set(row) - known
        if unknown:
            raise FormatError(f"[{section}] has unknown keys {sorted(unknown)}")
        try:
            res = tuple(int(v) for v in row.get("input", "224x224").split("x"))
            if len(res) != 2:
                raise ValueError("input must be HxW")
            desc = BackboneDesc(
                arch=row.get("arch", "resnet50"),
                input_resolution=res,
                num_classes=int(row.get("classes", "1000")),
            )
            plan = None
            if "block" in row:
                spec = BlockSpec(
                    kind=row["block"],
                    channels=STAGE_OUT[-1],  # placeholder; per-site widths apply
                    variant=row.get("variant"),
                    ratio=int(row.get("ratio", "16")),
                    pooling=row.get("pooling"),
                    fusion=row.get("fusion"),
                    position=row.get("position", "after_1x1"),
                )
                stages = tuple(s.strip() for s in row.get("stages", "c3,c4,c5").split(","))
                plan = InsertionPlan(block=spec, stages=stages,
                                     mode=row.get("mode", "all_blocks"))
            target = row.get("target")
            if target is not None and target not in PUBLISHED_TARGETS:
                raise ValueError(f"unknown target {target!r}")
        except (ValueError, SpecError) as exc:
            raise FormatError(f"[{section}]: {exc}") from exc
        entries.append(TableEntry(section, desc, plan, target))
    return entries
