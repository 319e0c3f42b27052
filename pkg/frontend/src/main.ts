// Console entry point.  Configuration comes from the URL: ?base=<service
// url>&token=<moderator id>.  Without a token the review tab is hidden and
// search behaves as the end-user surface.

import { ApiClient } from "./api";
import { renderReview, renderSearch } from "./dom";
import { ReviewViewState, initialReviewState, loadNextTask, submitDraft } from "./review";
import {
  SearchViewState,
  initialSearchState,
  openExplanation,
  refreshExamples,
  runSearch,
  setSlider,
} from "./search";

const params = new URLSearchParams(window.location.search);
const config = {
  baseUrl: params.get("base") ?? "http://localhost:8080",
  moderatorToken: params.get("token"),
};
const api = new ApiClient(config);

const reviewState: ReviewViewState = initialReviewState();
const searchState: SearchViewState = initialSearchState();

const reviewPane = document.getElementById("review")!;
const searchPane = document.getElementById("search")!;
const reviewTab = document.getElementById("tab-review") as HTMLButtonElement;
const searchTab = document.getElementById("tab-search") as HTMLButtonElement;

let activeTab: "review" | "search" = config.moderatorToken ? "review" : "search";
if (!config.moderatorToken) {
  reviewTab.style.display = "none";
}

function render(): void {
  reviewPane.style.display = activeTab === "review" ? "" : "none";
  searchPane.style.display = activeTab === "search" ? "" : "none";
  reviewTab.classList.toggle("active", activeTab === "review");
  searchTab.classList.toggle("active", activeTab === "search");
  if (activeTab === "review") {
    renderReview(reviewPane, reviewState, api, reviewHandlers);
  } else {
    renderSearch(searchPane, searchState, searchHandlers);
  }
}

const reviewHandlers = {
  rerender: render,
  refresh: () => {
    void loadNextTask(reviewState, api).then(render);
  },
  submit: () => {
    if (!config.moderatorToken) return;
    void submitDraft(reviewState, api, config.moderatorToken).then(render);
  },
};

const searchHandlers = {
  rerender: render,
  search: () => {
    void runSearch(searchState, api).then(render);
  },
  slider: (value: number) => {
    void setSlider(searchState, api, value).then(render);
  },
  openThing: (thingId: string) => {
    void openExplanation(searchState, api, thingId).then(render);
  },
};

reviewTab.onclick = () => {
  activeTab = "review";
  render();
};
searchTab.onclick = () => {
  activeTab = "search";
  render();
};

render();
void refreshExamples(searchState, api).then(render);
void runSearch(searchState, api).then(render);
if (config.moderatorToken) {
  void loadNextTask(reviewState, api).then(render);
}
