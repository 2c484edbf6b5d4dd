"""Shared test builders: raw NIfTI buffers, the four-tool registry, outcomes."""

from __future__ import annotations

import struct

from neuroagent.domain import (
    ClassDistribution,
    Modality,
    ModelOutcome,
    OutcomeStatus,
    ScanRef,
    TaskKind,
)
from neuroagent.registry import ModelBackendRef, ToolManifest, ToolRegistry

MULTI_MODEL_IDS = ("medicalnet", "nnmamba", "resnet50", "mcad", "cmvim")
SINGLE_MODEL_IDS = ("medicalnet", "resnet50", "resnet34", "resnet18")


def build_nifti(
    dim=(3, 64, 64, 64, 1, 1, 1, 1),
    magic=b"n+1\x00",
    byte_order="<",
    datatype=16,
    bitpix=32,
    sizeof_hdr=348,
) -> bytes:
    """Assemble a raw 348-byte header independently of the package's writer."""
    buf = bytearray(348)
    struct.pack_into(f"{byte_order}i", buf, 0, sizeof_hdr)
    struct.pack_into(f"{byte_order}8h", buf, 40, *dim)
    struct.pack_into(f"{byte_order}h", buf, 70, datatype)
    struct.pack_into(f"{byte_order}h", buf, 72, bitpix)
    buf[344:348] = magic
    return bytes(buf)


def make_scan(modality: Modality, scan_id: str | None = None) -> ScanRef:
    return ScanRef(
        id=scan_id or f"{modality.value}-test",
        modality=modality,
        source_uri=f"/tmp/{modality.value}.nii",
        dims=(64, 64, 64),
        datatype_code=16,
        validated=True,
    )


def ok_outcome(model_id: str, probs, task=TaskKind.DIAGNOSIS) -> ModelOutcome:
    return ModelOutcome(model_id=model_id, distribution=ClassDistribution(task, tuple(probs)))


def failed_outcome(model_id: str, reason: str = "unreachable") -> ModelOutcome:
    return ModelOutcome(
        model_id=model_id, distribution=None, status=OutcomeStatus.FAILED, reason=reason
    )


def four_tool_manifests(endpoints: dict[str, list[str]] | None = None) -> list[ToolManifest]:
    """The reference configuration: two multi-modal tools with five backends,
    two single-modality diagnosis tools with four backends."""
    endpoints = endpoints or {}

    def backends(tool_id: str, model_ids, default: str):
        urls = endpoints.get(tool_id) or [default] * len(model_ids)
        return tuple(
            ModelBackendRef(model_id=mid, endpoint=url) for mid, url in zip(model_ids, urls)
        )

    diag_default = "mock:fixed:0.2,0.3,0.5"
    prog_default = "mock:fixed:0.4,0.6"
    return [
        ToolManifest(
            tool_id="mm-diag",
            task=TaskKind.DIAGNOSIS,
            required_modalities=frozenset({Modality.MRI, Modality.PET}),
            backends=backends("mm-diag", MULTI_MODEL_IDS, diag_default),
            description="multi-modal diagnosis",
        ),
        ToolManifest(
            tool_id="mm-prog",
            task=TaskKind.PROGNOSIS,
            required_modalities=frozenset({Modality.MRI, Modality.PET}),
            backends=backends("mm-prog", MULTI_MODEL_IDS, prog_default),
            description="multi-modal prognosis",
        ),
        ToolManifest(
            tool_id="mri-diag",
            task=TaskKind.DIAGNOSIS,
            required_modalities=frozenset({Modality.MRI}),
            backends=backends("mri-diag", SINGLE_MODEL_IDS, diag_default),
            description="MRI-only diagnosis",
        ),
        ToolManifest(
            tool_id="pet-diag",
            task=TaskKind.DIAGNOSIS,
            required_modalities=frozenset({Modality.PET}),
            backends=backends("pet-diag", SINGLE_MODEL_IDS, diag_default),
            description="PET-only diagnosis",
        ),
    ]


def four_tool_registry(endpoints: dict[str, list[str]] | None = None) -> ToolRegistry:
    registry = ToolRegistry()
    for manifest in four_tool_manifests(endpoints):
        registry.register_tool(manifest)
    return registry
