from pathlib import Path
from typing import Optional, Union


class ForgeError(Exception):
    """Базовый класс ошибок библиотеки"""


class SubtitleParseError(ForgeError):
    """Некорректный файл субтитров"""

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"Строка {line_no}: {reason}")


class ManifestError(ForgeError):
    """Не удалось прочитать запись манифеста"""

    def __init__(
        self, path: Optional[Union[str, Path]], line_no: int, reason: str
    ):
        self.path = path
        self.line_no = line_no
        self.reason = reason
        where = f"{path}:{line_no}" if path is not None else f"строка {line_no}"
        super().__init__(f"{self.__class__.__doc__} ({where}): {reason}")


class UndefinedWerError(ForgeError):
    """WER не определен: после нормализации в эталоне не осталось слов"""

    def __init__(self, reference: str):
        self.reference = reference
        super().__init__(f"{self.__class__.__doc__}. Эталон: {reference!r}")


class InvalidConfig(ForgeError):
    """Некорректный файл конфигурации"""

    def __init__(self, source: Union[str, Path], details: str):
        self.source = source
        super().__init__(f"{self.__class__.__doc__} {source}\nDetails: {details}")


class PipelineSpecError(ForgeError):
    """Описание конвейера не прошло проверку"""


class StageFailed(ForgeError):
    """Этап конвейера завершился с ошибкой"""

    def __init__(self, stage_name: str, cause: BaseException):
        self.stage_name = stage_name
        self.cause = cause
        super().__init__(
            f"{self.__class__.__doc__}: {stage_name}\n"
            f"Details: {type(cause).__name__}: {cause}"
        )
