from pydantic import BaseModel, ConfigDict, Field, field_validator

from asrforge.map_types.enums import LrSchedule, ModelSize, Profile, WeightInit


class TrainConfig(BaseModel):
    """Гиперпараметры обучения одной модели"""

    model_config = ConfigDict(
        frozen=True, use_attribute_docstrings=True, protected_namespaces=()
    )

    model_size: ModelSize
    profile: Profile
    learning_rate: float = Field(gt=0)
    batch_size: int = Field(gt=0)
    warmup_updates: int = Field(ge=0)
    """Прогрев первого этапа"""

    warmup_updates_stage2: int = Field(default=0, ge=0)
    """Прогрев второго этапа; 0, если второго этапа нет"""

    updates_stage1: int = Field(ge=0)
    updates_stage2: int = Field(default=0, ge=0)
    max_grad_norm: float = Field(ge=0)
    optimizer: str = "AdamW"
    beta1: float
    beta2: float
    epsilon: float = Field(gt=0)
    weight_decay: float = Field(ge=0)
    bpe_dropout: float = Field(ge=0, le=1)
    activation_dropout: float = Field(ge=0, le=1)
    stochastic_depth: float = Field(ge=0, le=1)
    lr_schedule: LrSchedule = LrSchedule.LINEAR_DECAY
    weight_init: WeightInit
    notes: tuple[str, ...] = ()

    @field_validator("batch_size")
    @classmethod
    def _power_of_two(cls, v: int) -> int:
        if v & (v - 1):
            raise ValueError(f"batch_size должен быть степенью двойки, получено {v}")
        return v

    @property
    def total_updates(self) -> int:
        return self.updates_stage1 + self.updates_stage2
