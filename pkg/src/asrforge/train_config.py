import json
from pathlib import Path
from typing import Union

from pydantic import ValidationError

from asrforge.errors import InvalidConfig
from asrforge.manifest import atomic_write
from asrforge.map_types.enums import LrSchedule, ModelSize, Profile, WeightInit
from asrforge.schemas.train_config import TrainConfig

OPENAI_LEARNING_RATES = {
    ModelSize.TINY: 1.5e-3,
    ModelSize.BASE: 1e-3,
    ModelSize.SMALL: 5e-4,
    ModelSize.MEDIUM: 2.5e-4,
    ModelSize.LARGE: 2e-4,
}
NB_LEARNING_RATES = {
    ModelSize.TINY: 6e-4,
    ModelSize.BASE: 4e-4,
    ModelSize.SMALL: 2e-4,
    ModelSize.MEDIUM: 1e-4,
    ModelSize.LARGE: 7e-5,
}

_COMMON = dict(
    max_grad_norm=1.0,
    optimizer="AdamW",
    beta1=0.9,
    beta2=0.98,
    epsilon=1e-6,
    stochastic_depth=0.0,
    lr_schedule=LrSchedule.LINEAR_DECAY,
)

_PROFILES: dict[Profile, dict] = {
    Profile.OPENAI_WHISPER: dict(
        batch_size=256,
        updates_stage1=1_048_576,
        warmup_updates=2048,
        weight_decay=0.1,
        weight_init=WeightInit.GAUSSIAN_FAN_IN,
        bpe_dropout=0.0,
        activation_dropout=0.0,
    ),
    Profile.OPENAI_WHISPER_LARGE_V3: dict(
        batch_size=1024,
        updates_stage1=655_360,
        warmup_updates=2048,
        weight_decay=0.1,
        weight_init=WeightInit.GAUSSIAN_FAN_IN,
        bpe_dropout=0.1,
        activation_dropout=0.0,
        notes=("update count 655,360 is reported for Large v2, not v3",),
    ),
    Profile.NB_WHISPER: dict(
        batch_size=1024,
        updates_stage1=200_000,
        updates_stage2=50_000,
        warmup_updates=10_000,
        warmup_updates_stage2=5_000,
        weight_decay=0.01,
        weight_init=WeightInit.PRETRAINED_CHECKPOINT,
        bpe_dropout=0.2,
        activation_dropout=0.1,
    ),
}

_PROFILE_TITLES = {
    Profile.OPENAI_WHISPER: "OpenAI Whisper",
    Profile.OPENAI_WHISPER_LARGE_V3: "OpenAI Whisper Large v3",
    Profile.NB_WHISPER: "NB-Whisper",
}

_ROW_TITLES = {
    "batch_size": "Batch Size",
    "updates_stage1": "Updates",
    "updates_stage2": "Updates",
    "warmup_updates": "Warmup Updates",
    "warmup_updates_stage2": "Warmup Updates",
    "max_grad_norm": "Max grad norm",
    "optimizer": "Optimizer",
    "beta1": "beta1",
    "beta2": "beta2",
    "epsilon": "epsilon",
    "weight_decay": "Weight Decay",
    "weight_init": "Weight Init",
    "lr_schedule": "Learning Rate Schedule",
    "bpe_dropout": "BPE Dropout",
    "stochastic_depth": "Stochastic Depth",
    "activation_dropout": "Activation Dropout",
}

_NOT_COMPARED = {"profile", "notes"}


def learning_rates(profile: Profile) -> dict[ModelSize, float]:
    if profile is Profile.NB_WHISPER:
        return NB_LEARNING_RATES
    return OPENAI_LEARNING_RATES


def emit_config(size: ModelSize, profile: Profile) -> TrainConfig:
    """Гиперпараметры обучения для размера модели и профиля

    Профили OpenAI используют одну и ту же таблицу скоростей обучения.
    Для NB-Whisper два этапа: 200 000 + 50 000 шагов с прогревом
    10 000 и 5 000 шагов.

    Args:
        size: Размер модели
        profile: Профиль обучения

    Returns:
        Конфигурация со значениями профиля
    """
    return TrainConfig(
        model_size=size,
        profile=profile,
        learning_rate=learning_rates(profile)[size],
        **_COMMON,
        **_PROFILES[profile],
    )


def validate_config(cfg: TrainConfig, profile: Profile) -> list[str]:
    """Отличия конфигурации от значений профиля

    Returns:
        По строке на поле; пустой список при точном совпадении
    """
    expected = emit_config(cfg.model_size, profile).model_dump(mode="json")
    actual = cfg.model_dump(mode="json")
    return [
        f"{name}: expected {expected[name]!r}, got {actual[name]!r}"
        for name in expected
        if name not in _NOT_COMPARED and expected[name] != actual[name]
    ]


def provenance(cfg: TrainConfig) -> dict[str, str]:
    """Ячейка исходной таблицы для каждого поля"""
    column = _PROFILE_TITLES[cfg.profile]
    cells = {
        "learning_rate": (
            f"learning-rate table, column {column}, row {cfg.model_size.title}"
        )
    }
    for name, row in _ROW_TITLES.items():
        cells[name] = f"hyperparameter table, column {column}, row {row}"
    return cells


def write_config(path: Union[str, Path], cfg: TrainConfig) -> None:
    """Запись конфигурации в JSON с блоком `provenance`"""
    data = cfg.model_dump(mode="json")
    data["provenance"] = provenance(cfg)
    with atomic_write(path) as file:
        json.dump(data, file, indent=2, ensure_ascii=False)
        file.write("\n")


def read_config(path: Union[str, Path]) -> TrainConfig:
    try:
        with open(path, encoding="utf-8") as file:
            return TrainConfig.model_validate_json(file.read())
    except (OSError, ValidationError) as e:
        raise InvalidConfig(path, str(e)) from e
