from django.urls import path
from . import views

urlpatterns = [
    path('', views.list_studies, name='list-studies'),
    path('<int:study_id>', views.study_detail, name='study-detail'),
    path('<int:study_id>/runs', views.study_runs, name='study-runs'),
]
