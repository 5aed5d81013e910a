/**
 * DOM wiring for the portal. Renders the current wizard step into #app
 * and persists (apk id, selection, job id) in the URL hash so a refresh
 * lands back on the same step.
 */

import { ApiClient, ApiError } from './api.js';
import { pollJob } from './poll.js';
import {
  WizardState,
  apkUploaded,
  canConfirm,
  canDownload,
  goBack,
  groupByClass,
  initialState,
  jobCreated,
  jobUpdated,
  patchesLoaded,
  persist,
  rehydrate,
  selectablePatch,
  togglePatch,
  withError,
} from './state.js';

const api = new ApiClient('');
let state: WizardState = initialState();

function saveHash(): void {
  const saved = persist(state);
  location.hash = encodeURIComponent(JSON.stringify(saved));
}

function setState(next: WizardState): void {
  state = next;
  saveHash();
  render();
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  node.append(...children);
  return node;
}

function errorBanner(): Node | string {
  if (!state.error) return '';
  return el('div', { class: 'error' }, state.error);
}

function render(): void {
  const app = document.getElementById('app');
  if (!app) return;
  app.replaceChildren();
  const steps = ['1. Select app', '2. Select patches', '3. Download'];
  const index = { select_app: 0, select_patches: 1, download: 2 }[state.step];
  app.append(
    el(
      'ol',
      { class: 'steps' },
      ...steps.map((label, i) => el('li', { class: i === index ? 'active' : '' }, label)),
    ),
  );
  app.append(errorBanner());
  if (state.step === 'select_app') renderSelectApp(app);
  if (state.step === 'select_patches') renderSelectPatches(app);
  if (state.step === 'download') renderDownload(app);
}

function renderSelectApp(app: HTMLElement): void {
  const input = el('input', { type: 'file', accept: '.apk' });
  input.addEventListener('change', () => {
    const file = input.files?.[0];
    if (file) void upload(file);
  });
  app.append(
    el('h2', {}, 'Select the app to patch'),
    el('p', {}, 'Choose an APK file. It is uploaded to the patching service and kept only briefly.'),
    input,
  );
}

async function upload(file: File): Promise<void> {
  try {
    const result = await api.uploadApk(file);
    let next = apkUploaded(state, result.apk_id, result.app_meta);
    const patches = await api.listPatches(result.apk_id);
    next = patchesLoaded(next, patches);
    setState(next);
  } catch (err) {
    setState(withError(state, err instanceof ApiError ? err.message : `Upload failed: ${err}`));
  }
}

function renderSelectPatches(app: HTMLElement): void {
  const meta = state.appMeta;
  app.append(
    el('h2', {}, 'Select patches'),
    el(
      'p',
      {},
      meta
        ? `App: ${meta.package_name} (versionCode ${meta.version_code})`
        : `App: ${state.apkId ?? ''}`,
    ),
  );
  for (const [className, patches] of groupByClass(state.patches)) {
    const section = el('section', {}, el('h3', {}, className.replace(/_/g, ' ')));
    for (const patch of patches) {
      const gate = selectablePatch(patch, state.requireVerified);
      const checkbox = el('input', { type: 'checkbox' });
      (checkbox as HTMLInputElement).checked = state.selected.has(patch.id);
      (checkbox as HTMLInputElement).disabled = !gate.enabled;
      checkbox.addEventListener('change', () => setState(togglePatch(state, patch.id)));
      const badges = el(
        'span',
        { class: 'badges' },
        el('span', { class: 'badge' }, patch.mechanism),
        el('span', { class: 'badge' }, patch.specificity.replace(/_/g, '-')),
        patch.verified ? el('span', { class: 'badge verified' }, '✓ verified') : '',
      );
      const label = el(
        'label',
        { class: gate.enabled ? 'patch' : 'patch disabled' },
        checkbox,
        el('strong', {}, ` ${patch.name} `),
        badges,
        el('div', { class: 'description' }, patch.description),
        gate.reason ? el('div', { class: 'reason' }, `Unavailable: ${gate.reason}`) : '',
      );
      section.append(label);
    }
    app.append(section);
  }
  const confirm = el('button', {}, 'Patch this app') as HTMLButtonElement;
  confirm.disabled = !canConfirm(state);
  confirm.addEventListener('click', () => void startJob());
  const back = el('button', { class: 'secondary' }, 'Back');
  back.addEventListener('click', () => setState(goBack(state)));
  app.append(el('div', { class: 'actions' }, back, confirm));
}

async function startJob(): Promise<void> {
  if (!state.apkId) return;
  try {
    const jobId = await api.createJob(state.apkId, [...state.selected], {
      require_verified: state.requireVerified,
    });
    setState(jobCreated(state, jobId));
    const record = await pollJob(api, jobId, 500, (update) => setState(jobUpdated(state, update)));
    setState(jobUpdated(state, record));
  } catch (err) {
    setState(
      withError(state, err instanceof ApiError ? `Job failed to start: ${err.message}` : `${err}`),
    );
  }
}

function renderDownload(app: HTMLElement): void {
  app.append(el('h2', {}, 'Download the patched app'));
  app.append(el('p', { class: 'job-state' }, `Job state: ${state.jobState ?? 'unknown'}`));
  if (canDownload(state) && state.jobId) {
    app.append(
      el(
        'p',
        {},
        el(
          'a',
          { href: api.artifactUrl(state.jobId), download: 'patched.apk', class: 'download' },
          'Download patched APK',
        ),
      ),
    );
  }
  if (state.jobState === 'failed' && state.jobError) {
    app.append(el('div', { class: 'error' }, `Patching failed: ${state.jobError}`));
  }
  if (state.report) {
    const list = el('ul', { class: 'report' });
    for (const patch of state.report.patches) {
      const item = el('li', {}, el('strong', {}, patch.id), ` — ${patch.status}`);
      const steps = el('ul', {});
      for (const step of patch.steps) {
        steps.append(el('li', {}, `${step.kind}: ${step.status} (${step.detail})`));
      }
      item.append(steps);
      list.append(item);
    }
    app.append(el('h3', {}, 'Report'), list);
    app.append(el('p', { class: 'fingerprint' }, `Signer: ${state.report.signer_fingerprint}`));
  }
  const back = el('button', { class: 'secondary' }, 'Back');
  back.addEventListener('click', () => setState(goBack(state)));
  app.append(el('div', { class: 'actions' }, back));
}

async function boot(): Promise<void> {
  if (location.hash.length > 1) {
    try {
      const saved = JSON.parse(decodeURIComponent(location.hash.slice(1)));
      state = await rehydrate(api, saved);
      if (state.jobId && state.jobState !== 'done' && state.jobState !== 'failed') {
        void pollJob(api, state.jobId, 500, (update) => setState(jobUpdated(state, update)));
      }
    } catch {
      state = initialState();
    }
  }
  render();
}

void boot();
