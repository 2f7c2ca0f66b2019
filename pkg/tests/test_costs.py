"""Cost-model checks: closed-form block counts, whole-backbone counts
against an independent reference implementation, and table plumbing."""

import numpy as np
import pytest

from gcblocks import (
    BackboneDesc,
    BlockSpec,
    FormatError,
    InsertionPlan,
    SpecError,
    count_backbone,
    count_block,
    emit_cost_table,
    parse_cost_config,
)
from gcblocks.costs import (
    DEFAULT_CONFIG,
    PUBLISHED_TARGETS,
    check_target,
    insertion_sites,
    stage_geometry,
)

GC_1024 = BlockSpec("gc", channels=1024, ratio=16)


def _block_params(spec, c, h, w):
    return count_block(spec, c, h, w).params_total


class TestBlockCounts:
    def test_gc_formula_value(self):
        # 1024 + 2*1024^2/16 + 2*64 = 132224
        assert _block_params(GC_1024, 1024, 14, 14) == 132_224

    def test_gc_params_formula(self):
        for c in (64, 256, 512, 2048):
            for r in (4, 8, 16, 32):
                spec = BlockSpec("gc", channels=c, ratio=r)
                assert _block_params(spec, c, 7, 7) == c + 2 * c * c // r + 2 * (c // r)

    def test_snl_params(self):
        assert _block_params(BlockSpec("snl", channels=1024), 1024, 14, 14) == 1_049_600

    def test_nl_e_gaussian_params(self):
        spec = BlockSpec("nl", channels=1024, variant="e_gaussian")
        assert _block_params(spec, 1024, 14, 14) == 2_097_152  # 4 * C * C/2

    def test_nl_gaussian_params(self):
        spec = BlockSpec("nl", channels=1024, variant="gaussian")
        assert _block_params(spec, 1024, 14, 14) == 1_048_576  # value + out only

    def test_se_params(self):
        assert _block_params(BlockSpec("se", channels=2048, ratio=16), 2048, 7, 7) == 524_288

    def test_framework_att_counts_scorer(self):
        att = BlockSpec("framework", channels=256, ratio=16, pooling="att", fusion="scale")
        avg = BlockSpec("framework", channels=256, ratio=16, pooling="avg", fusion="scale")
        assert _block_params(att, 256, 7, 7) - _block_params(avg, 256, 7, 7) == 256

    def test_value_macs_factored_vs_unfactored(self):
        # C^2 once vs N_p * C^2
        lit = count_block(BlockSpec("snl", channels=64), 64, 14, 14)
        fac = count_block(BlockSpec("snl_factored", channels=64), 64, 14, 14)
        assert lit.breakdown["block"]["value"]["macs"] == 802_816
        assert fac.breakdown["block"]["value"]["macs"] == 4_096

    def test_factored_value_macs_independent_of_positions(self):
        for h, w in ((7, 7), (14, 14), (56, 56)):
            fac = count_block(BlockSpec("snl_factored", channels=64), 64, h, w)
            assert fac.breakdown["block"]["value"]["macs"] == 4_096

    def test_nl_attention_macs_quadratic_in_positions(self):
        spec = BlockSpec("nl", channels=64, variant="e_gaussian")
        small = count_block(spec, 64, 7, 7).breakdown["block"]
        large = count_block(spec, 64, 14, 14).breakdown["block"]
        att = lambda b: b["attention_logits"]["macs"] + b["attention_apply"]["macs"]
        assert att(large) == 16 * att(small)

    def test_bad_dims(self):
        with pytest.raises(SpecError):
            count_block(GC_1024, 1024, 0, 14)


class TestBackboneCounts:
    def test_resnet50_params_match_reference_framework(self):
        torchvision = pytest.importorskip("torchvision")
        expected = sum(p.numel() for p in torchvision.models.resnet50().parameters())
        assert count_backbone(BackboneDesc("resnet50")).params_total == expected

    def test_resnet101_params_match_reference_framework(self):
        torchvision = pytest.importorskip("torchvision")
        expected = sum(p.numel() for p in torchvision.models.resnet101().parameters())
        assert count_backbone(BackboneDesc("resnet101")).params_total == expected

    def test_resnet50_frozen_totals(self):
        # conv arithmetic done by hand: stem 118.0M + stages 0.668/0.951/1.387/0.732 G + fc
        report = count_backbone(BackboneDesc("resnet50"))
        assert report.params_total == 25_557_032
        assert report.flops_total == 3_857_973_248

    def test_stage_geometry(self):
        geom = stage_geometry(BackboneDesc("resnet50"))
        assert geom["c2"] == (3, 256, 56, 56)
        assert geom["c3"] == (4, 512, 28, 28)
        assert geom["c4"] == (6, 1024, 14, 14)
        assert geom["c5"] == (3, 2048, 7, 7)

    def test_resnet101_c4_depth(self):
        assert stage_geometry(BackboneDesc("resnet101"))["c4"][0] == 23

    def test_one_gc_at_last_c4(self):
        plan = InsertionPlan(GC_1024, mode="last_block_of_c4")
        report = count_backbone(BackboneDesc("resnet50"), plan)
        assert report.params_added == 132_224
        assert report.params_total == 25_557_032 + 132_224

    def test_additivity_exact(self):
        plan = InsertionPlan(BlockSpec("gc", channels=1024, ratio=16))
        desc = BackboneDesc("resnet50")
        with_blocks = count_backbone(desc, plan)
        base = count_backbone(desc)
        added = sum(
            count_block(plan.block, c, h, w).params_total
            for _, c, h, w in insertion_sites(desc, plan)
        )
        assert with_blocks.params_total == base.params_total + added
        assert with_blocks.params_added == added
        added_macs = sum(
            count_block(plan.block, c, h, w).flops_total
            for _, c, h, w in insertion_sites(desc, plan)
        )
        assert with_blocks.flops_total == base.flops_total + added_macs

    def test_all_gc_sites(self):
        plan = InsertionPlan(GC_1024)
        sites = insertion_sites(BackboneDesc("resnet50"), plan)
        assert len(sites) == 4 + 6 + 3

    def test_added_params_decrease_with_ratio(self):
        desc = BackboneDesc("resnet50")
        added = [
            count_backbone(desc, InsertionPlan(BlockSpec("gc", channels=1024, ratio=r))).params_added
            for r in (4, 8, 16, 32)
        ]
        assert added == sorted(added, reverse=True)
        assert len(set(added)) == 4

    def test_position_does_not_change_cost(self):
        desc = BackboneDesc("resnet50")
        a = count_backbone(desc, InsertionPlan(GC_1024))
        after_add = BlockSpec("gc", channels=1024, ratio=16, position="after_add")
        b = count_backbone(desc, InsertionPlan(after_add))
        assert a.params_total == b.params_total
        assert a.flops_total == b.flops_total

    def test_c2_insertion_forbidden(self):
        with pytest.raises(SpecError):
            InsertionPlan(GC_1024, stages=("c2", "c3"))

    def test_empty_stages_forbidden(self):
        with pytest.raises(SpecError):
            InsertionPlan(GC_1024, stages=())

    def test_aux_flops_separate_from_headline(self):
        report = count_backbone(BackboneDesc("resnet50"))
        assert report.aux_flops_total > 0
        # batch-norm and pooling work never leaks into the headline MACs
        assert report.flops_total == 3_857_973_248


class TestPublishedTargets:
    @pytest.mark.parametrize(
        "key,plan",
        [
            ("plus_1nl", InsertionPlan(BlockSpec("nl", channels=1024, variant="e_gaussian"), mode="last_block_of_c4")),
            ("plus_1snl", InsertionPlan(BlockSpec("snl", channels=1024), mode="last_block_of_c4")),
            ("plus_1gc", InsertionPlan(GC_1024, mode="last_block_of_c4")),
            ("all_gc", InsertionPlan(GC_1024)),
        ],
    )
    def test_delta_targets(self, key, plan):
        report = count_backbone(BackboneDesc("resnet50"), plan)
        for target in PUBLISHED_TARGETS[key]:
            ok, measured, allowed = check_target(target, report)
            assert ok, f"{key}/{target.kind}: {measured} vs {target.value} (+-{allowed})"

    def test_baseline_targets(self):
        report = count_backbone(BackboneDesc("resnet50"))
        for target in PUBLISHED_TARGETS["baseline"]:
            ok, _, _ = check_target(target, report)
            assert ok


class TestTableAndConfig:
    def test_baseline_row_rendering(self):
        lines, _ = emit_cost_table([("baseline", BackboneDesc("resnet50"), None)])
        assert len(lines) == 2
        assert "25.56 | 3.86" in lines[1]

    def test_empty_entries_header_only(self):
        lines, reports = emit_cost_table([])
        assert len(lines) == 1
        assert reports == []

    def test_two_rows_stable_order(self):
        entries = [
            ("r50", BackboneDesc("resnet50"), None),
            ("r101", BackboneDesc("resnet101"), None),
        ]
        lines, _ = emit_cost_table(entries)
        assert lines[1].startswith("r50") and lines[2].startswith("r101")

    def test_default_config_parses(self):
        entries = parse_cost_config(DEFAULT_CONFIG)
        labels = [e.label for e in entries]
        assert labels[0] == "baseline-resnet50"
        assert any(e.target == "all_gc" for e in entries)
        assert any(e.desc.arch == "resnet101" for e in entries)

    def test_empty_config_rejected(self):
        with pytest.raises(FormatError):
            parse_cost_config("")

    def test_malformed_config_names_line(self):
        with pytest.raises(FormatError, match="line"):
            parse_cost_config("[row]\narch resnet50\n")

    def test_unknown_key_rejected(self):
        with pytest.raises(FormatError, match="unknown keys"):
            parse_cost_config("[row]\narch = resnet50\ncolour = blue\n")

    def test_unknown_target_rejected(self):
        with pytest.raises(FormatError):
            parse_cost_config("[row]\narch = resnet50\ntarget = nonsense\n")

    def test_bad_stage_rejected(self):
        with pytest.raises(FormatError):
            parse_cost_config("[row]\nblock = gc\nstages = c2\n")

    def test_custom_resolution(self):
        entries = parse_cost_config("[row]\narch = resnet50\ninput = 112x112\n")
        report = count_backbone(entries[0].desc)
        assert report.flops_total < 3_857_973_248 / 3
