from django.urls import reverse
from rest_framework import status
from rest_framework.test import APITestCase

from ..models import RunRecord, Study


class ApiTests(APITestCase):
    @classmethod
    def setUpTestData(cls):
        cls.study = Study.objects.create(
            name="batch_reactor", kind=Study.KIND_REACTOR, base_seed=0, config={"name": "batch_reactor"}
        )
        RunRecord.objects.bulk_create([
            RunRecord(study=cls.study, run_index=0, level=0, delta_w=0.0, seed=0, rho=0.0,
                      lambda_min_z=1e-3, status=RunRecord.STATUS_FEASIBLE, spectral_abscissa=-1.2),
            RunRecord(study=cls.study, run_index=1, level=0, delta_w=0.0, seed=1, rho=0.0,
                      lambda_min_z=1e-3, status=RunRecord.STATUS_FEASIBLE, spectral_abscissa=-1.1),
            RunRecord(study=cls.study, run_index=2, level=1, delta_w=1e-2, seed=2, rho=4.0,
                      lambda_min_z=1e-3, status=RunRecord.STATUS_INFEASIBLE),
            RunRecord(study=cls.study, run_index=3, level=1, delta_w=1e-2, seed=3, rho=None,
                      status=RunRecord.STATUS_FAILURE),
        ])
        cls.pipeline = Study.objects.create(name="scalar_example", kind=Study.KIND_PIPELINE)

    def test_home(self):
        response = self.client.get(reverse("home"))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data["statistics"], {"total_studies": 2, "total_runs": 4})
        self.assertIn("list_studies", response.data["endpoints"])

    def test_status(self):
        response = self.client.get(reverse("status"))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data["total_studies"], 2)
        self.assertEqual(response.data["total_runs"], 4)
        self.assertIsNotNone(response.data["last_study_at"])

    def test_list_studies(self):
        response = self.client.get(reverse("list-studies"))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(len(response.data), 2)
        counts = {item["name"]: item["run_count"] for item in response.data}
        self.assertEqual(counts, {"batch_reactor": 4, "scalar_example": 0})

    def test_filter_studies_by_kind(self):
        response = self.client.get(reverse("list-studies"), {"kind": Study.KIND_PIPELINE})
        self.assertEqual([item["id"] for item in response.data], [self.pipeline.id])

    def test_invalid_kind(self):
        response = self.client.get(reverse("list-studies"), {"kind": "unknown"})
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)
        self.assertEqual(response.data["error"], "Invalid query parameters")

    def test_study_detail_with_summary(self):
        response = self.client.get(reverse("study-detail", args=[self.study.id]))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        summary = response.data["summary"]
        self.assertEqual([row["level"] for row in summary], [0, 1])
        self.assertEqual(summary[0]["feasible_pct"], 100.0)
        self.assertEqual(summary[1]["feasible_pct"], 0.0)
        self.assertEqual(summary[1]["failure_pct"], 50.0)
        self.assertEqual(summary[1]["rho_median"], 4.0)

    def test_study_not_found(self):
        response = self.client.get(reverse("study-detail", args=[9999]))
        self.assertEqual(response.status_code, status.HTTP_404_NOT_FOUND)
        self.assertEqual(response.data, {"error": "Study not found"})

    def test_runs(self):
        response = self.client.get(reverse("study-runs", args=[self.study.id]))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual([run["run_index"] for run in response.data], [0, 1, 2, 3])

    def test_runs_filtered(self):
        url = reverse("study-runs", args=[self.study.id])
        response = self.client.get(url, {"status": "infeasible"})
        self.assertEqual([run["run_index"] for run in response.data], [2])
        response = self.client.get(url, {"level": 0})
        self.assertEqual([run["run_index"] for run in response.data], [0, 1])

    def test_runs_invalid_filter(self):
        response = self.client.get(reverse("study-runs", args=[self.study.id]), {"status": "maybe"})
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)
        self.assertIn("status", response.data["details"])

    def test_runs_for_missing_study(self):
        response = self.client.get(reverse("study-runs", args=[9999]))
        self.assertEqual(response.status_code, status.HTTP_404_NOT_FOUND)

    def test_schema(self):
        response = self.client.get(reverse("schema"))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
