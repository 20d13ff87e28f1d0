"""Service factory for the calibration and study services"""

from app.config.config import Config

class ServiceFactory:
    """Factory class to provide services"""

    def __init__(self, config: Config):
        self.config = config
        self._calibration_service = None
        self._study_service = None

    @property
    def calibration_service(self):
        """Get calibration pipeline service"""
        if self._calibration_service is None:
            from app.services.calibration_service import CalibrationService
            self._calibration_service = CalibrationService(self.config)
        return self._calibration_service

    @property
    def study_service(self):
        """Get study service (shares the calibration service)"""
        if self._study_service is None:
            from app.services.study_service import StudyService
            self._study_service = StudyService(self.config, self.calibration_service)
        return self._study_service
